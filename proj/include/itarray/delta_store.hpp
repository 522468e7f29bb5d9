#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "itarray/array.hpp"

namespace itarray {

// Positive/negative delta between two consecutive versions.
//   plus:  new values of changed cells; an all-null tuple marks a deletion.
//   minus: old values of changed cells that were non-empty before.
struct DeltaPair {
  ChunkedArray plus;
  ChunkedArray minus;

  bool empty() const noexcept { return plus.empty() && minus.empty(); }
};

enum class MergeMode { Add, Subtract };
enum class ScanKind { Full, DeltaPlus, DeltaMinus };

std::string_view merge_mode_name(MergeMode mode) noexcept;

DeltaPair compute_delta(const ChunkedArray& previous, const ChunkedArray& next);
ChunkedArray replay_forward(const ChunkedArray& previous, const DeltaPair& delta);
ChunkedArray replay_backward(const ChunkedArray& next, const DeltaPair& delta);

// Cellwise `a op b` on matching coordinates; cells only in `b` are inserted
// (negated for Subtract). Null scalars in `b` leave `a` untouched. When
// `vanish_on_zero` names an attribute, result cells where it equals zero are
// removed.
ChunkedArray merge_arithmetic(const ChunkedArray& a, const ChunkedArray& b, MergeMode mode,
                              const std::optional<std::string>& vanish_on_zero = std::nullopt);

struct AnnotatedStoreOptions {
  std::optional<std::string> vanish_on_zero;
};

// Versioned array storage that records the delta pair of every store and
// executes add/subtract merge annotations itself.
//
// Optionally write-through to a directory: one sub-directory per array name
// holding v<N>.full / v<N>.plus / v<N>.minus dumps and a MANIFEST.
class VersionedStore {
 public:
  VersionedStore() = default;
  explicit VersionedStore(std::filesystem::path root);

  // Loads every array found under `root`.
  static VersionedStore open(const std::filesystem::path& root);

  // Appends a new version of `name`. All-null cells are treated as deletions.
  // Throws SchemaMismatch.
  std::uint64_t store(const std::string& name, const ChunkedArray& a);

  // New version = latest `op` b. Throws UnknownArray, SchemaMismatch.
  std::uint64_t store_annotated(const std::string& name, const ChunkedArray& b, MergeMode mode,
                                const AnnotatedStoreOptions& options = {});

  // Throws UnknownArray, UnknownVersion.
  ChunkedArray scan(const std::string& name, ScanKind which = ScanKind::Full,
                    std::optional<std::uint64_t> version = std::nullopt) const;
  const DeltaPair& delta(const std::string& name, std::optional<std::uint64_t> version = std::nullopt) const;

  bool contains(const std::string& name) const { return arrays_.contains(name); }
  std::uint64_t latest_version(const std::string& name) const;
  std::vector<std::uint64_t> versions(const std::string& name) const;
  std::vector<std::string> names() const;
  // "store", "add" or "subtract" for the given version.
  std::string annotation(const std::string& name, std::uint64_t version) const;

 private:
  struct Version {
    std::uint64_t id;
    ChunkedArray full;
    DeltaPair delta;
    std::string annotation;
  };

  std::uint64_t append(const std::string& name, ChunkedArray next, std::string annotation);
  const Version& find_version(const std::string& name, std::optional<std::uint64_t> version) const;
  void persist(const std::string& name, const Version& v) const;

  std::map<std::string, std::vector<Version>> arrays_;
  std::optional<std::filesystem::path> root_;
};

}  // namespace itarray
