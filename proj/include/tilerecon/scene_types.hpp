#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tilerecon/geometry.hpp"

namespace tilerecon {

// One reference image and up to three source images, sources ordered by
// descending pair score.
struct ViewGroup {
  std::uint32_t ref_image_id = 0;
  std::vector<std::uint32_t> src_image_ids;

  std::vector<std::uint32_t> Members() const {
    std::vector<std::uint32_t> members{ref_image_id};
    members.insert(members.end(), src_image_ids.begin(), src_image_ids.end());
    return members;
  }

  bool operator==(const ViewGroup&) const = default;
};

struct RegionViewAssignment {
  // Chosen group per point, keyed by point id.
  std::map<std::uint64_t, ViewGroup> groups;
  std::vector<std::uint32_t> used_image_ids;      // sorted
  std::vector<std::uint32_t> excluded_image_ids;  // sorted
  // Points for which no candidate group saw the point.
  std::vector<std::uint64_t> skipped_point_ids;   // sorted

  bool operator==(const RegionViewAssignment&) const = default;
};

struct GridIndex {
  int row = 0;  // along z
  int col = 0;  // along x

  auto operator<=>(const GridIndex&) const = default;
};

struct SubRegion {
  GridIndex grid_index;
  SceneBounds bounds;
  // Cells in the last row/column are closed on their max side; all other
  // cells are half-open [lo, hi) in x and z.
  bool closed_max_x = false;
  bool closed_max_z = false;
  std::vector<std::uint64_t> point_ids;         // sorted
  std::vector<std::uint32_t> matched_image_ids;  // sorted
  SceneBounds init_bounds;
  std::optional<RegionViewAssignment> assigned;
};

struct DroppedCell {
  GridIndex grid_index;
  std::string reason;  // "empty", "points", "images" or "points+images"
  std::size_t num_points = 0;
  std::size_t num_images = 0;
};

struct PartitionResult {
  int grid_n = 0;
  SceneBounds scene_bounds;
  std::vector<SubRegion> regions;
  std::vector<DroppedCell> dropped;
  // Filtered points lying outside the refined scene bounds.
  std::size_t discarded_points = 0;
};

}  // namespace tilerecon
