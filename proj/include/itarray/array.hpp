#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "itarray/error.hpp"
#include "itarray/scalar.hpp"

namespace itarray {

using Coordinate = std::vector<std::int64_t>;

struct Dimension {
  std::string name;
  std::int64_t lower = 0;
  std::int64_t upper = 0;

  std::int64_t extent() const noexcept { return upper - lower + 1; }
  friend bool operator==(const Dimension&, const Dimension&) = default;
};

struct Attribute {
  std::string name;
  ScalarKind kind = ScalarKind::Float64;
  friend bool operator==(const Attribute&, const Attribute&) = default;
};

// Inclusive coordinate box.
struct Box {
  Coordinate lo;
  Coordinate hi;
  bool contains(std::span<const std::int64_t> c) const noexcept;
};

// Shape and typing of a chunked array: the d-dimensional domain, the cell
// tuple type, the regular chunk grid and the per-dimension overlap radius.
//
// Cells are addressed either by coordinate or by their row-major linear
// offset within the domain; linear order is the canonical cell order.
class ArraySchema {
 public:
  ArraySchema() = default;
  // Empty `chunk_extents` means one chunk per dimension; empty `overlap`
  // means no overlap. Throws InvalidSchema.
  ArraySchema(std::vector<Dimension> dims, std::vector<Attribute> attrs,
              std::vector<std::int64_t> chunk_extents = {}, std::vector<std::int64_t> overlap = {});

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t arity() const noexcept { return attrs_.size(); }
  const std::vector<Dimension>& dims() const noexcept { return dims_; }
  const std::vector<Attribute>& attrs() const noexcept { return attrs_; }
  const std::vector<std::int64_t>& chunk_extents() const noexcept { return chunk_extents_; }
  const std::vector<std::int64_t>& overlap() const noexcept { return overlap_; }

  std::optional<std::size_t> dim_index(std::string_view name) const noexcept;
  std::optional<std::size_t> attr_index(std::string_view name) const noexcept;

  std::int64_t cell_count() const noexcept { return cell_count_; }
  bool contains(std::span<const std::int64_t> c) const noexcept;
  std::int64_t linear(std::span<const std::int64_t> c) const noexcept;
  Coordinate coordinate(std::int64_t linear) const;
  void coordinate_into(std::int64_t linear, std::span<std::int64_t> out) const noexcept;

  // Chunks are keyed by the row-major offset of their id in the chunk grid,
  // so key order is chunk-id order.
  std::int64_t chunk_count() const noexcept { return chunk_count_; }
  const std::vector<std::int64_t>& chunk_grid() const noexcept { return chunk_grid_; }
  std::int64_t chunk_key(std::span<const std::int64_t> c) const noexcept;
  std::int64_t chunk_key_of_linear(std::int64_t linear) const noexcept;
  Coordinate chunk_id(std::int64_t key) const;
  Box core_box(std::int64_t key) const;
  // Core box grown by the overlap radius and clipped to the domain.
  Box halo_box(std::int64_t key) const;

  // Same dimensions and attributes; chunking may differ.
  bool same_shape(const ArraySchema& other) const noexcept {
    return dims_ == other.dims_ && attrs_ == other.attrs_;
  }
  ArraySchema with_chunking(std::vector<std::int64_t> chunk_extents,
                            std::vector<std::int64_t> overlap = {}) const;
  ArraySchema with_attrs(std::vector<Attribute> attrs) const;

  friend bool operator==(const ArraySchema& a, const ArraySchema& b) noexcept {
    return a.dims_ == b.dims_ && a.attrs_ == b.attrs_ && a.chunk_extents_ == b.chunk_extents_ &&
           a.overlap_ == b.overlap_;
  }

 private:
  std::vector<Dimension> dims_;
  std::vector<Attribute> attrs_;
  std::vector<std::int64_t> chunk_extents_;
  std::vector<std::int64_t> overlap_;
  std::vector<std::int64_t> strides_;
  std::vector<std::int64_t> chunk_grid_;
  std::vector<std::int64_t> chunk_strides_;
  std::int64_t cell_count_ = 0;
  std::int64_t chunk_count_ = 0;
};

struct Chunk {
  std::int64_t key = 0;
  // Linear offset -> tuple. Core cells are owned; halo cells are replicas of
  // neighbouring cores and only change through an explicit shuffle.
  std::map<std::int64_t, CellTuple> core;
  std::map<std::int64_t, CellTuple> halo;
};

struct CellRef {
  std::int64_t index;
  const CellTuple* tuple;
};

// Sparse d-dimensional array partitioned into regular chunks. Chunks are
// shared copy-on-write between array values, so copying an array and
// editing a few cells only clones the touched chunks.
class ChunkedArray {
 public:
  ChunkedArray() = default;
  explicit ChunkedArray(ArraySchema schema) : schema_(std::move(schema)) {}

  const ArraySchema& schema() const noexcept { return schema_; }
  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

  const CellTuple* find(std::span<const std::int64_t> c) const;
  const CellTuple* find_linear(std::int64_t linear) const;
  std::optional<CellTuple> get(std::span<const std::int64_t> c) const;

  // Throws OutOfDomain / ArityMismatch. `std::nullopt` empties the cell.
  // Halo replicas are not touched.
  void set_cell(std::span<const std::int64_t> c, std::optional<CellTuple> t);
  void set_linear(std::int64_t linear, CellTuple t);
  void erase_linear(std::int64_t linear);

  // Core cells in canonical (row-major) order.
  std::vector<CellRef> cells() const;
  std::vector<std::pair<Coordinate, CellTuple>> nonempty_cells() const;

  const std::map<std::int64_t, std::shared_ptr<Chunk>>& chunks() const noexcept { return chunks_; }
  const Chunk* chunk(std::int64_t key) const;
  Chunk& mutable_chunk(std::int64_t key);
  // Installs a fully built chunk (replacing any existing one).
  void put_chunk(std::shared_ptr<Chunk> chunk);
  void clear_halos();
  std::size_t halo_size() const;

 private:
  ArraySchema schema_;
  std::map<std::int64_t, std::shared_ptr<Chunk>> chunks_;
  std::size_t size_ = 0;
  std::uint64_t version_ = 0;
};

ChunkedArray create_array(ArraySchema schema);

// Number of coordinates whose cell state (value or emptiness) differs.
// Throws SchemaMismatch.
std::int64_t diff_count(const ChunkedArray& a, const ChunkedArray& b);

// Cellwise equality of core cells (chunking ignored).
bool same_cells(const ChunkedArray& a, const ChunkedArray& b);

// Returns a copy re-partitioned onto a new chunk grid (halos dropped).
ChunkedArray rechunk(const ChunkedArray& a, std::vector<std::int64_t> chunk_extents,
                     std::vector<std::int64_t> overlap = {});

}  // namespace itarray
