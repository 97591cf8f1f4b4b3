#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <unordered_map>
#include <vector>

#include "skatelab/kin.hpp"

namespace skatelab {

// Axis-aligned body-frame box over (x, y, z, yaw).
struct Workspace {
  std::array<Range, 4> bounds{};
};

// Grid steps for (x, y, z, yaw). Keys are round(value / step), so grids are
// anchored at zero rather than at the workspace corner.
struct Quantization {
  std::array<double, 4> step = {0.005, 0.005, 0.005, 0.01};
};

using GridKey = std::array<std::int64_t, 4>;

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const noexcept;
};

struct IkTableStats {
  std::size_t grid_points = 0;
  std::size_t entries = 0;
  std::size_t solutions = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

// Quantized cache of ik() results for one limb. A stored solution is always
// the exact ik() of its grid-point pose, so eager and lazy tables agree
// entry for entry.
//
// Reads may run concurrently; insert_solved() needs a single writer with no
// concurrent readers.
class IkTable {
 public:
  IkTable(const LimbGeometry& limb, const Workspace& workspace,
          const Quantization& quantization);
  IkTable(const IkTable& other);
  IkTable& operator=(const IkTable& other);

  // Solves every grid point of the workspace for the given families. Grid
  // points with no valid family are left absent. Throws
  // std::invalid_argument on an empty grid.
  static IkTable build(const LimbGeometry& limb, const Workspace& workspace,
                       const Quantization& quantization,
                       const std::vector<IkFamily>& families = {
                           IkFamily::kElbowUp, IkFamily::kElbowDown});

  // Nearest-grid-point retrieval. std::nullopt is a miss: the pose lies
  // outside the workspace or the entry is absent.
  std::optional<LimbJoints> lookup(const SkatePose& pose, IkFamily family) const;

  // Lazy path: on a miss inside the workspace, solves the grid-point pose,
  // stores it when valid and returns it.
  std::optional<LimbJoints> lookup_or_insert(const SkatePose& pose, IkFamily family);

  bool in_workspace(const GridKey& key) const;
  GridKey key_of(const SkatePose& pose) const;
  SkatePose pose_of(const GridKey& key) const;

  // Every grid key inside the workspace, in lexicographic order.
  std::vector<GridKey> grid_keys() const;

  const LimbGeometry& limb() const { return limb_; }
  const Workspace& workspace() const { return workspace_; }
  const Quantization& quantization() const { return quantization_; }
  std::size_t size() const { return entries_.size(); }
  IkTableStats stats() const;

  // Binary file: header (magic, version, geometry hash, workspace,
  // quantization) followed by entries sorted by key.
  void save(const std::filesystem::path& path) const;
  // Throws std::runtime_error when the file is missing, malformed or was
  // built for a different geometry.
  static IkTable load(const std::filesystem::path& path, const LimbGeometry& limb);

  struct FileHeader {
    std::uint64_t geometry_hash = 0;
    Workspace workspace;
    Quantization quantization;
    std::uint64_t entries = 0;
  };
  static FileHeader read_header(const std::filesystem::path& path);

 private:
  struct Entry {
    std::array<std::optional<LimbJoints>, kNumIkFamilies> solution;
  };

  LimbGeometry limb_;
  Workspace workspace_;
  Quantization quantization_;
  std::array<std::int64_t, 4> key_lo_{};
  std::array<std::int64_t, 4> key_hi_{};
  std::unordered_map<GridKey, Entry, GridKeyHash> entries_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
};

}  // namespace skatelab
