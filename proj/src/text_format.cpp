#include "itarray/text_format.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace itarray {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw Error(ErrorCode::ParseError, "bad integer '" + std::string(text) + "'");
  return v;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace

std::string schema_header(const ArraySchema& schema) {
  std::string out = "dims=";
  for (std::size_t i = 0; i < schema.rank(); ++i) {
    const auto& d = schema.dims()[i];
    if (i) out += ',';
    out += d.name + ':' + std::to_string(d.lower) + ':' + std::to_string(d.upper);
  }
  out += " attrs=";
  for (std::size_t i = 0; i < schema.arity(); ++i) {
    const auto& a = schema.attrs()[i];
    if (i) out += ',';
    out += a.name + ':' + std::string(scalar_kind_name(a.kind));
  }
  return out;
}

ArraySchema parse_schema_header(std::string_view line) {
  line = strip(line);
  auto space = line.find(' ');
  if (line.substr(0, 5) != "dims=" || space == std::string_view::npos ||
      line.substr(space + 1, 6) != "attrs=")
    throw Error(ErrorCode::ParseError, "bad header '" + std::string(line) + "'");
  std::string_view dims_text = line.substr(5, space - 5);
  std::string_view attrs_text = line.substr(space + 7);
  std::vector<Dimension> dims;
  for (auto part : split(dims_text, ',')) {
    auto f = split(part, ':');
    if (f.size() != 3) throw Error(ErrorCode::ParseError, "bad dimension '" + std::string(part) + "'");
    dims.push_back({std::string(f[0]), parse_int(f[1]), parse_int(f[2])});
  }
  std::vector<Attribute> attrs;
  if (!attrs_text.empty()) {
    for (auto part : split(attrs_text, ',')) {
      auto f = split(part, ':');
      if (f.size() != 2) throw Error(ErrorCode::ParseError, "bad attribute '" + std::string(part) + "'");
      attrs.push_back({std::string(f[0]), parse_scalar_kind(f[1])});
    }
  }
  return ArraySchema(std::move(dims), std::move(attrs));
}

void dump_array_to(std::ostream& out, const ChunkedArray& a) {
  const ArraySchema& s = a.schema();
  out << schema_header(s) << '\n';
  Coordinate c(s.rank());
  std::string line;
  for (const auto& ref : a.cells()) {
    s.coordinate_into(ref.index, c);
    line.clear();
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(c[i]);
    }
    line += '|';
    for (std::size_t i = 0; i < ref.tuple->size(); ++i) {
      if (i) line += ',';
      line += format_scalar((*ref.tuple)[i]);
    }
    out << line << '\n';
  }
}

std::string dump_array(const ChunkedArray& a) {
  std::ostringstream out;
  dump_array_to(out, a);
  return out.str();
}

ChunkedArray load_array(std::string_view text, std::vector<std::int64_t> chunk_extents,
                        std::vector<std::int64_t> overlap) {
  auto lines = split(text, '\n');
  if (lines.empty() || strip(lines[0]).empty()) throw Error(ErrorCode::ParseError, "missing header");
  ArraySchema schema = parse_schema_header(lines[0]);
  if (!chunk_extents.empty() || !overlap.empty())
    schema = schema.with_chunking(std::move(chunk_extents), std::move(overlap));
  ChunkedArray a(schema);
  Coordinate c(schema.rank());
  std::int64_t last = -1;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    std::string_view line = strip(lines[ln]);
    if (line.empty()) continue;
    auto bar = line.find('|');
    if (bar == std::string_view::npos)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(ln + 1) + ": missing '|'");
    auto coords = split(line.substr(0, bar), ',');
    if (coords.size() != schema.rank())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(ln + 1) + ": wrong coordinate rank");
    for (std::size_t i = 0; i < coords.size(); ++i) c[i] = parse_int(coords[i]);
    if (!schema.contains(c))
      throw Error(ErrorCode::ParseError, "line " + std::to_string(ln + 1) + ": coordinate outside the domain");
    std::int64_t lin = schema.linear(c);
    if (lin <= last)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(ln + 1) + ": cells out of canonical order");
    last = lin;
    CellTuple t;
    std::string_view values = line.substr(bar + 1);
    if (schema.arity() > 0) {
      auto parts = split(values, ',');
      if (parts.size() != schema.arity())
        throw Error(ErrorCode::ParseError, "line " + std::to_string(ln + 1) + ": wrong tuple arity");
      for (std::size_t i = 0; i < parts.size(); ++i)
        t.push_back(parse_scalar(parts[i], schema.attrs()[i].kind));
    }
    a.set_linear(lin, std::move(t));
  }
  return a;
}

void write_array_file(const std::filesystem::path& path, const ChunkedArray& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  dump_array_to(out, a);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ChunkedArray read_array_file(const std::filesystem::path& path, std::vector<std::int64_t> chunk_extents,
                             std::vector<std::int64_t> overlap) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_array(buf.str(), std::move(chunk_extents), std::move(overlap));
}

std::uint64_t array_hash(const ChunkedArray& a) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char ch : dump_array(a)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace itarray
