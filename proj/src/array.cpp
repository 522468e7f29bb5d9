#include "itarray/array.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace itarray {

bool Box::contains(std::span<const std::int64_t> c) const noexcept {
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] < lo[i] || c[i] > hi[i]) return false;
  return true;
}

ArraySchema::ArraySchema(std::vector<Dimension> dims, std::vector<Attribute> attrs,
                         std::vector<std::int64_t> chunk_extents, std::vector<std::int64_t> overlap)
    : dims_(std::move(dims)),
      attrs_(std::move(attrs)),
      chunk_extents_(std::move(chunk_extents)),
      overlap_(std::move(overlap)) {
  if (dims_.empty()) throw Error(ErrorCode::InvalidSchema, "an array needs at least one dimension");
  std::set<std::string> names;
  for (const auto& d : dims_) {
    if (d.name.empty()) throw Error(ErrorCode::InvalidSchema, "empty dimension name");
    if (!names.insert(d.name).second)
      throw Error(ErrorCode::InvalidSchema, "duplicate name '" + d.name + "'");
    if (d.upper < d.lower)
      throw Error(ErrorCode::InvalidSchema, "dimension '" + d.name + "' has upper < lower");
  }
  for (const auto& a : attrs_) {
    if (a.name.empty()) throw Error(ErrorCode::InvalidSchema, "empty attribute name");
    if (!names.insert(a.name).second)
      throw Error(ErrorCode::InvalidSchema, "duplicate name '" + a.name + "'");
  }
  const std::size_t d = dims_.size();
  if (chunk_extents_.empty())
    for (const auto& dim : dims_) chunk_extents_.push_back(dim.extent());
  if (overlap_.empty()) overlap_.assign(d, 0);
  if (chunk_extents_.size() != d || overlap_.size() != d)
    throw Error(ErrorCode::InvalidSchema, "chunk extents / overlap must have one entry per dimension");
  for (std::size_t i = 0; i < d; ++i) {
    if (chunk_extents_[i] <= 0 || chunk_extents_[i] > dims_[i].extent())
      throw Error(ErrorCode::InvalidSchema,
                  "chunk extent of '" + dims_[i].name + "' must lie in [1, dimension extent]");
    if (overlap_[i] < 0 || overlap_[i] >= chunk_extents_[i])
      throw Error(ErrorCode::InvalidSchema,
                  "overlap of '" + dims_[i].name + "' must lie in [0, chunk extent)");
  }

  strides_.assign(d, 1);
  chunk_grid_.assign(d, 1);
  chunk_strides_.assign(d, 1);
  constexpr std::int64_t limit = std::numeric_limits<std::int64_t>::max() / 4;
  cell_count_ = 1;
  chunk_count_ = 1;
  for (std::size_t i = d; i-- > 0;) {
    strides_[i] = cell_count_;
    if (dims_[i].extent() > limit / cell_count_)
      throw Error(ErrorCode::InvalidSchema, "domain too large to address");
    cell_count_ *= dims_[i].extent();
    chunk_grid_[i] = (dims_[i].extent() + chunk_extents_[i] - 1) / chunk_extents_[i];
    chunk_strides_[i] = chunk_count_;
    chunk_count_ *= chunk_grid_[i];
  }
}

std::optional<std::size_t> ArraySchema::dim_index(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (dims_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> ArraySchema::attr_index(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < attrs_.size(); ++i)
    if (attrs_[i].name == name) return i;
  return std::nullopt;
}

bool ArraySchema::contains(std::span<const std::int64_t> c) const noexcept {
  if (c.size() != dims_.size()) return false;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] < dims_[i].lower || c[i] > dims_[i].upper) return false;
  return true;
}

std::int64_t ArraySchema::linear(std::span<const std::int64_t> c) const noexcept {
  std::int64_t idx = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) idx += (c[i] - dims_[i].lower) * strides_[i];
  return idx;
}

void ArraySchema::coordinate_into(std::int64_t linear, std::span<std::int64_t> out) const noexcept {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    out[i] = dims_[i].lower + linear / strides_[i];
    linear %= strides_[i];
  }
}

Coordinate ArraySchema::coordinate(std::int64_t linear) const {
  Coordinate c(dims_.size());
  coordinate_into(linear, c);
  return c;
}

std::int64_t ArraySchema::chunk_key(std::span<const std::int64_t> c) const noexcept {
  std::int64_t key = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    key += ((c[i] - dims_[i].lower) / chunk_extents_[i]) * chunk_strides_[i];
  return key;
}

std::int64_t ArraySchema::chunk_key_of_linear(std::int64_t linear) const noexcept {
  std::int64_t key = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    std::int64_t offset = linear / strides_[i];
    linear %= strides_[i];
    key += (offset / chunk_extents_[i]) * chunk_strides_[i];
  }
  return key;
}

Coordinate ArraySchema::chunk_id(std::int64_t key) const {
  Coordinate id(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    id[i] = key / chunk_strides_[i];
    key %= chunk_strides_[i];
  }
  return id;
}

Box ArraySchema::core_box(std::int64_t key) const {
  Coordinate id = chunk_id(key);
  Box box{Coordinate(dims_.size()), Coordinate(dims_.size())};
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    box.lo[i] = dims_[i].lower + id[i] * chunk_extents_[i];
    box.hi[i] = std::min(box.lo[i] + chunk_extents_[i] - 1, dims_[i].upper);
  }
  return box;
}

Box ArraySchema::halo_box(std::int64_t key) const {
  Box box = core_box(key);
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    box.lo[i] = std::max(box.lo[i] - overlap_[i], dims_[i].lower);
    box.hi[i] = std::min(box.hi[i] + overlap_[i], dims_[i].upper);
  }
  return box;
}

ArraySchema ArraySchema::with_chunking(std::vector<std::int64_t> chunk_extents,
                                       std::vector<std::int64_t> overlap) const {
  return ArraySchema(dims_, attrs_, std::move(chunk_extents), std::move(overlap));
}

ArraySchema ArraySchema::with_attrs(std::vector<Attribute> attrs) const {
  std::vector<std::int64_t> overlap = overlap_;
  return ArraySchema(dims_, std::move(attrs), chunk_extents_, std::move(overlap));
}

// ---------------------------------------------------------------------------

const Chunk* ChunkedArray::chunk(std::int64_t key) const {
  auto it = chunks_.find(key);
  return it == chunks_.end() ? nullptr : it->second.get();
}

Chunk& ChunkedArray::mutable_chunk(std::int64_t key) {
  auto& slot = chunks_[key];
  if (!slot) {
    slot = std::make_shared<Chunk>();
    slot->key = key;
  } else if (slot.use_count() > 1) {
    slot = std::make_shared<Chunk>(*slot);
  }
  return *slot;
}

void ChunkedArray::put_chunk(std::shared_ptr<Chunk> c) {
  auto it = chunks_.find(c->key);
  if (it != chunks_.end()) size_ -= it->second->core.size();
  size_ += c->core.size();
  chunks_[c->key] = std::move(c);
}

const CellTuple* ChunkedArray::find_linear(std::int64_t linear) const {
  auto it = chunks_.find(schema_.chunk_key_of_linear(linear));
  if (it == chunks_.end()) return nullptr;
  auto cell = it->second->core.find(linear);
  return cell == it->second->core.end() ? nullptr : &cell->second;
}

const CellTuple* ChunkedArray::find(std::span<const std::int64_t> c) const {
  if (!schema_.contains(c)) return nullptr;
  return find_linear(schema_.linear(c));
}

std::optional<CellTuple> ChunkedArray::get(std::span<const std::int64_t> c) const {
  if (!schema_.contains(c)) throw Error(ErrorCode::OutOfDomain, "coordinate outside the array domain");
  if (const CellTuple* t = find_linear(schema_.linear(c))) return *t;
  return std::nullopt;
}

void ChunkedArray::set_cell(std::span<const std::int64_t> c, std::optional<CellTuple> t) {
  if (!schema_.contains(c)) throw Error(ErrorCode::OutOfDomain, "coordinate outside the array domain");
  if (!t) {
    erase_linear(schema_.linear(c));
    return;
  }
  set_linear(schema_.linear(c), std::move(*t));
}

void ChunkedArray::set_linear(std::int64_t linear, CellTuple t) {
  if (t.size() != schema_.arity())
    throw Error(ErrorCode::ArityMismatch, "tuple arity " + std::to_string(t.size()) + " != " +
                                              std::to_string(schema_.arity()));
  Chunk& ch = mutable_chunk(schema_.chunk_key_of_linear(linear));
  auto [it, inserted] = ch.core.insert_or_assign(linear, std::move(t));
  (void)it;
  if (inserted) ++size_;
}

void ChunkedArray::erase_linear(std::int64_t linear) {
  std::int64_t key = schema_.chunk_key_of_linear(linear);
  auto it = chunks_.find(key);
  if (it == chunks_.end() || !it->second->core.contains(linear)) return;
  Chunk& ch = mutable_chunk(key);
  ch.core.erase(linear);
  --size_;
}

std::vector<CellRef> ChunkedArray::cells() const {
  std::vector<CellRef> out;
  out.reserve(size_);
  for (const auto& [key, ch] : chunks_)
    for (const auto& [idx, t] : ch->core) out.push_back({idx, &t});
  auto by_index = [](const CellRef& a, const CellRef& b) { return a.index < b.index; };
  if (!std::is_sorted(out.begin(), out.end(), by_index)) std::sort(out.begin(), out.end(), by_index);
  return out;
}

std::vector<std::pair<Coordinate, CellTuple>> ChunkedArray::nonempty_cells() const {
  std::vector<std::pair<Coordinate, CellTuple>> out;
  for (const auto& ref : cells()) out.emplace_back(schema_.coordinate(ref.index), *ref.tuple);
  return out;
}

void ChunkedArray::clear_halos() {
  for (auto& [key, ch] : chunks_)
    if (!ch->halo.empty()) mutable_chunk(key).halo.clear();
}

std::size_t ChunkedArray::halo_size() const {
  std::size_t n = 0;
  for (const auto& [key, ch] : chunks_) n += ch->halo.size();
  return n;
}

ChunkedArray create_array(ArraySchema schema) { return ChunkedArray(std::move(schema)); }

namespace {

std::int64_t diff_maps(const std::map<std::int64_t, CellTuple>* a,
                       const std::map<std::int64_t, CellTuple>* b) {
  static const std::map<std::int64_t, CellTuple> empty;
  if (!a) a = &empty;
  if (!b) b = &empty;
  std::int64_t n = 0;
  auto ia = a->begin();
  auto ib = b->begin();
  while (ia != a->end() || ib != b->end()) {
    if (ib == b->end() || (ia != a->end() && ia->first < ib->first)) {
      ++n;
      ++ia;
    } else if (ia == a->end() || ib->first < ia->first) {
      ++n;
      ++ib;
    } else {
      if (!(ia->second == ib->second)) ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

}  // namespace

std::int64_t diff_count(const ChunkedArray& a, const ChunkedArray& b) {
  if (!a.schema().same_shape(b.schema()))
    throw Error(ErrorCode::SchemaMismatch, "diff_count needs arrays of the same shape");
  if (a.schema().chunk_extents() != b.schema().chunk_extents()) {
    ChunkedArray rb = rechunk(b, a.schema().chunk_extents(), a.schema().overlap());
    return diff_count(a, rb);
  }
  std::int64_t n = 0;
  auto ia = a.chunks().begin();
  auto ib = b.chunks().begin();
  while (ia != a.chunks().end() || ib != b.chunks().end()) {
    if (ib == b.chunks().end() || (ia != a.chunks().end() && ia->first < ib->first)) {
      n += static_cast<std::int64_t>(ia->second->core.size());
      ++ia;
    } else if (ia == a.chunks().end() || ib->first < ia->first) {
      n += static_cast<std::int64_t>(ib->second->core.size());
      ++ib;
    } else {
      if (ia->second != ib->second) n += diff_maps(&ia->second->core, &ib->second->core);
      ++ia;
      ++ib;
    }
  }
  return n;
}

bool same_cells(const ChunkedArray& a, const ChunkedArray& b) {
  return a.schema().same_shape(b.schema()) && diff_count(a, b) == 0;
}

ChunkedArray rechunk(const ChunkedArray& a, std::vector<std::int64_t> chunk_extents,
                     std::vector<std::int64_t> overlap) {
  ChunkedArray out(a.schema().with_chunking(std::move(chunk_extents), std::move(overlap)));
  out.set_version(a.version());
  for (const auto& [key, ch] : a.chunks())
    for (const auto& [idx, t] : ch->core) out.set_linear(idx, t);
  return out;
}

}  // namespace itarray
