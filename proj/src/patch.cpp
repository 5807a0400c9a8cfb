#include "geopatch/patch.hpp"

#include <fmt/format.h>

namespace geopatch {

std::string make_patch_id(std::string_view tile_id, int col, int row) {
  return fmt::format("{}_{:02d}_{:02d}", tile_id, col, row);
}

std::string PatchExtent::id() const { return make_patch_id(tile_id, col, row); }

bool contains(const SquareExtent& outer, const SquareExtent& inner) {
  return inner.min_x() >= outer.min_x() && inner.max_x() <= outer.max_x() &&
         inner.min_y() >= outer.min_y() && inner.max_y() <= outer.max_y();
}

}  // namespace geopatch
