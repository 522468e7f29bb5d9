#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "itarray/array.hpp"

namespace itarray {

// Line-oriented dump:
//
//   dims=x:0:3,y:0:3 attrs=d:float64
//   0,1|5
//   1,0|_
//
// One line per non-empty core cell in canonical order; `_` is a null scalar.
// Floats use the shortest representation that parses back to the same bits.
std::string dump_array(const ChunkedArray& a);
void dump_array_to(std::ostream& out, const ChunkedArray& a);

// Chunking is not part of the dump; the loaded array uses `chunk_extents`
// (empty = single chunk). Lines must be in canonical order and inside the
// domain. Throws ParseError.
ChunkedArray load_array(std::string_view text, std::vector<std::int64_t> chunk_extents = {},
                        std::vector<std::int64_t> overlap = {});

std::string schema_header(const ArraySchema& schema);
ArraySchema parse_schema_header(std::string_view line);

void write_array_file(const std::filesystem::path& path, const ChunkedArray& a);
ChunkedArray read_array_file(const std::filesystem::path& path,
                             std::vector<std::int64_t> chunk_extents = {},
                             std::vector<std::int64_t> overlap = {});

// FNV-1a over the dump text; stable fingerprint of array contents.
std::uint64_t array_hash(const ChunkedArray& a);

}  // namespace itarray
