#include "itarray/delta_store.hpp"

#include <fstream>
#include <sstream>

#include "itarray/text_format.hpp"

namespace itarray {

std::string_view merge_mode_name(MergeMode mode) noexcept {
  return mode == MergeMode::Add ? "add" : "subtract";
}

namespace {

using CellMap = std::map<std::int64_t, CellTuple>;

void diff_into(const CellMap& prev, const CellMap& next, std::size_t arity, DeltaPair& out) {
  auto ip = prev.begin();
  auto in = next.begin();
  while (ip != prev.end() || in != next.end()) {
    if (in == next.end() || (ip != prev.end() && ip->first < in->first)) {
      out.minus.set_linear(ip->first, ip->second);
      out.plus.set_linear(ip->first, null_tuple(arity));
      ++ip;
    } else if (ip == prev.end() || in->first < ip->first) {
      out.plus.set_linear(in->first, in->second);
      ++in;
    } else {
      if (!(ip->second == in->second)) {
        out.minus.set_linear(ip->first, ip->second);
        out.plus.set_linear(in->first, in->second);
      }
      ++ip;
      ++in;
    }
  }
}

ChunkedArray drop_all_null(const ChunkedArray& a) {
  ChunkedArray out = a;
  for (const auto& ref : a.cells())
    if (all_null(*ref.tuple)) out.erase_linear(ref.index);
  return out;
}

Scalar negate(const Scalar& s) {
  if (s.is_int()) return Scalar(-s.as_int());
  if (s.is_float()) return Scalar(-s.as_double());
  return s;
}

Scalar combine(const Scalar& a, const Scalar& b, MergeMode mode, ScalarKind kind) {
  if (b.is_null()) return a;
  if (a.is_null()) return mode == MergeMode::Add ? b : negate(b);
  if (kind == ScalarKind::Int64)
    return Scalar(mode == MergeMode::Add ? a.as_int() + b.as_int() : a.as_int() - b.as_int());
  return Scalar(mode == MergeMode::Add ? a.as_double() + b.as_double() : a.as_double() - b.as_double());
}

}  // namespace

DeltaPair compute_delta(const ChunkedArray& previous, const ChunkedArray& next) {
  if (!previous.schema().same_shape(next.schema()))
    throw Error(ErrorCode::SchemaMismatch, "delta between arrays of different shape");
  const ArraySchema& schema = next.schema();
  DeltaPair out{ChunkedArray(schema), ChunkedArray(schema)};
  ChunkedArray prev = previous.schema().chunk_extents() == schema.chunk_extents()
                          ? previous
                          : rechunk(previous, schema.chunk_extents(), schema.overlap());
  static const CellMap empty;
  auto ip = prev.chunks().begin();
  auto in = next.chunks().begin();
  while (ip != prev.chunks().end() || in != next.chunks().end()) {
    if (in == next.chunks().end() || (ip != prev.chunks().end() && ip->first < in->first)) {
      diff_into(ip->second->core, empty, schema.arity(), out);
      ++ip;
    } else if (ip == prev.chunks().end() || in->first < ip->first) {
      diff_into(empty, in->second->core, schema.arity(), out);
      ++in;
    } else {
      if (ip->second != in->second) diff_into(ip->second->core, in->second->core, schema.arity(), out);
      ++ip;
      ++in;
    }
  }
  return out;
}

ChunkedArray replay_forward(const ChunkedArray& previous, const DeltaPair& delta) {
  ChunkedArray out = previous;
  for (const auto& ref : delta.minus.cells()) out.erase_linear(ref.index);
  for (const auto& ref : delta.plus.cells()) {
    if (all_null(*ref.tuple))
      out.erase_linear(ref.index);
    else
      out.set_linear(ref.index, *ref.tuple);
  }
  return out;
}

ChunkedArray replay_backward(const ChunkedArray& next, const DeltaPair& delta) {
  ChunkedArray out = next;
  for (const auto& ref : delta.plus.cells()) out.erase_linear(ref.index);
  for (const auto& ref : delta.minus.cells()) out.set_linear(ref.index, *ref.tuple);
  return out;
}

ChunkedArray merge_arithmetic(const ChunkedArray& a, const ChunkedArray& b, MergeMode mode,
                              const std::optional<std::string>& vanish_on_zero) {
  if (!a.schema().same_shape(b.schema()))
    throw Error(ErrorCode::SchemaMismatch, "annotated merge needs arrays of the same shape");
  const ArraySchema& schema = a.schema();
  std::optional<std::size_t> vanish;
  if (vanish_on_zero) {
    vanish = schema.attr_index(*vanish_on_zero);
    if (!vanish) throw Error(ErrorCode::SchemaMismatch, "unknown attribute '" + *vanish_on_zero + "'");
  }
  ChunkedArray out = a;
  for (const auto& ref : b.cells()) {
    const CellTuple* old = a.find_linear(ref.index);
    CellTuple t(schema.arity());
    for (std::size_t i = 0; i < schema.arity(); ++i)
      t[i] = combine(old ? (*old)[i] : Scalar::null(), (*ref.tuple)[i], mode, schema.attrs()[i].kind);
    if (vanish && !t[*vanish].is_null() && t[*vanish].as_double() == 0.0)
      out.erase_linear(ref.index);
    else
      out.set_linear(ref.index, std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

VersionedStore::VersionedStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(*root_);
}

std::uint64_t VersionedStore::append(const std::string& name, ChunkedArray next, std::string annotation) {
  auto& history = arrays_[name];
  Version v;
  if (history.empty()) {
    v.id = 1;
    v.delta = DeltaPair{next, ChunkedArray(next.schema())};
  } else {
    const Version& prev = history.back();
    if (!prev.full.schema().same_shape(next.schema()))
      throw Error(ErrorCode::SchemaMismatch, "store of '" + name + "' changes its schema");
    v.id = prev.id + 1;
    v.delta = compute_delta(prev.full, next);
  }
  next.set_version(v.id);
  v.full = std::move(next);
  v.annotation = std::move(annotation);
  history.push_back(std::move(v));
  if (root_) persist(name, history.back());
  return history.back().id;
}

std::uint64_t VersionedStore::store(const std::string& name, const ChunkedArray& a) {
  return append(name, drop_all_null(a), "store");
}

std::uint64_t VersionedStore::store_annotated(const std::string& name, const ChunkedArray& b,
                                              MergeMode mode, const AnnotatedStoreOptions& options) {
  auto it = arrays_.find(name);
  if (it == arrays_.end() || it->second.empty())
    throw Error(ErrorCode::UnknownArray, "no array named '" + name + "'");
  ChunkedArray merged = merge_arithmetic(it->second.back().full, b, mode, options.vanish_on_zero);
  return append(name, std::move(merged), std::string(merge_mode_name(mode)));
}

const VersionedStore::Version& VersionedStore::find_version(const std::string& name,
                                                            std::optional<std::uint64_t> version) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end() || it->second.empty())
    throw Error(ErrorCode::UnknownArray, "no array named '" + name + "'");
  const auto& history = it->second;
  if (!version) return history.back();
  if (*version < 1 || *version > history.size())
    throw Error(ErrorCode::UnknownVersion, "'" + name + "' has no version " + std::to_string(*version));
  return history[*version - 1];
}

ChunkedArray VersionedStore::scan(const std::string& name, ScanKind which,
                                  std::optional<std::uint64_t> version) const {
  const Version& v = find_version(name, version);
  switch (which) {
    case ScanKind::Full: return v.full;
    case ScanKind::DeltaPlus: return v.delta.plus;
    case ScanKind::DeltaMinus: return v.delta.minus;
  }
  return v.full;
}

const DeltaPair& VersionedStore::delta(const std::string& name, std::optional<std::uint64_t> version) const {
  return find_version(name, version).delta;
}

std::uint64_t VersionedStore::latest_version(const std::string& name) const {
  return find_version(name, std::nullopt).id;
}

std::vector<std::uint64_t> VersionedStore::versions(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw Error(ErrorCode::UnknownArray, "no array named '" + name + "'");
  std::vector<std::uint64_t> out;
  for (const auto& v : it->second) out.push_back(v.id);
  return out;
}

std::vector<std::string> VersionedStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, history] : arrays_) out.push_back(name);
  return out;
}

std::string VersionedStore::annotation(const std::string& name, std::uint64_t version) const {
  return find_version(name, version).annotation;
}

namespace {

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::int64_t> split_ints(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoll(item));
  return out;
}

}  // namespace

void VersionedStore::persist(const std::string& name, const Version& v) const {
  auto dir = *root_ / name;
  std::filesystem::create_directories(dir);
  std::string stem = "v" + std::to_string(v.id);
  write_array_file(dir / (stem + ".full"), v.full);
  write_array_file(dir / (stem + ".plus"), v.delta.plus);
  write_array_file(dir / (stem + ".minus"), v.delta.minus);
  std::ofstream manifest(dir / "MANIFEST", v.id == 1 ? std::ios::trunc : std::ios::app);
  if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest for '" + name + "'");
  if (v.id == 1)
    manifest << "chunks " << join_ints(v.full.schema().chunk_extents()) << " overlap "
             << join_ints(v.full.schema().overlap()) << '\n';
  manifest << "version " << v.id << ' ' << v.annotation << '\n';
}

VersionedStore VersionedStore::open(const std::filesystem::path& root) {
  VersionedStore s;
  if (!std::filesystem::exists(root)) throw Error(ErrorCode::IoError, "no store at " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::ifstream manifest(dir / "MANIFEST");
    if (!manifest) continue;
    std::string name = dir.filename().string();
    std::string word, chunks, overlap_word, overlap;
    manifest >> word >> chunks >> overlap_word >> overlap;
    if (word != "chunks" || overlap_word != "overlap")
      throw Error(ErrorCode::ParseError, "bad manifest for '" + name + "'");
    auto extents = split_ints(chunks);
    auto radius = split_ints(overlap);
    std::uint64_t id;
    std::string annotation;
    while (manifest >> word >> id >> annotation) {
      std::string stem = "v" + std::to_string(id);
      Version v;
      v.id = id;
      v.full = read_array_file(dir / (stem + ".full"), extents, radius);
      v.full.set_version(id);
      v.delta.plus = read_array_file(dir / (stem + ".plus"), extents, radius);
      v.delta.minus = read_array_file(dir / (stem + ".minus"), extents, radius);
      v.annotation = annotation;
      s.arrays_[name].push_back(std::move(v));
    }
  }
  s.root_ = root;
  return s;
}

}  // namespace itarray
