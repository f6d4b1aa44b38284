#include "partedit/shapeworld.hpp"

#include <algorithm>
#include <cmath>

namespace partedit {

namespace {

constexpr std::array<std::string_view, kParamCount> kParamNames{
    "leg_height",  "leg_thickness", "seat_width",     "seat_depth",    "seat_thickness",
    "back_height", "back_thickness", "arm_height", "arm_thickness"};

// Ranges keep every in-bounds shape disjoint: 2 * leg_thickness and
// 2 * arm_thickness stay below the seat extents, back_thickness below seat_depth.
constexpr ParamBounds kChairBounds{{
    {0.20, 0.70},  // leg_height
    {0.03, 0.10},  // leg_thickness
    {0.35, 0.90},  // seat_width
    {0.35, 0.90},  // seat_depth
    {0.03, 0.12},  // seat_thickness
    {0.25, 0.80},  // back_height
    {0.02, 0.08},  // back_thickness
    {0.10, 0.35},  // arm_height
    {0.03, 0.10},  // arm_thickness
}};

constexpr ParamBounds kTableBounds{{
    {0.35, 1.00},  // leg_height
    {0.04, 0.14},  // leg_thickness
    {0.50, 1.40},  // seat_width
    {0.40, 1.20},  // seat_depth
    {0.02, 0.08},  // seat_thickness
    {0.25, 0.80},  // back_height (unused)
    {0.02, 0.08},  // back_thickness (unused)
    {0.10, 0.35},  // arm_height (unused)
    {0.03, 0.10},  // arm_thickness (unused)
}};

constexpr std::array<EditAxis, kParamCount> kAxes{{
    {Part::legs, Attribute::length, Param::leg_height},
    {Part::legs, Attribute::thickness, Param::leg_thickness},
    {Part::seat, Attribute::width, Param::seat_width},
    {Part::seat, Attribute::length, Param::seat_depth},
    {Part::seat, Attribute::thickness, Param::seat_thickness},
    {Part::back, Attribute::length, Param::back_height},
    {Part::back, Attribute::thickness, Param::back_thickness},
    {Part::armrests, Attribute::length, Param::arm_height},
    {Part::armrests, Attribute::thickness, Param::arm_thickness},
}};

ShapeParams midpoint(Category category) {
  ShapeParams p;
  p.category = category;
  const auto& b = bounds_for(category);
  for (std::size_t i = 0; i < kParamCount; ++i) p.values[i] = 0.5 * (b[i].min + b[i].max);
  p.has_back = category == Category::chair;
  p.has_arms = category == Category::chair;
  return p;
}

Box make_box(double x0, double x1, double y0, double y1, double z0, double z1, Part part) {
  return Box{{x0, y0, z0}, {x1, y1, z1}, part};
}

}  // namespace

std::string_view to_string(Category c) { return c == Category::chair ? "chair" : "table"; }

std::string_view to_string(Part p) {
  switch (p) {
    case Part::legs:
      return "legs";
    case Part::seat:
      return "seat";
    case Part::back:
      return "back";
    case Part::armrests:
      return "armrests";
  }
  return "?";
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::length:
      return "length";
    case Attribute::thickness:
      return "thickness";
    case Attribute::width:
      return "width";
  }
  return "?";
}

std::string_view to_string(Direction d) { return d == Direction::increase ? "+" : "-"; }

std::string_view to_string(Param p) { return kParamNames[static_cast<std::size_t>(p)]; }

Category category_from_string(std::string_view s) {
  if (s == "chair") return Category::chair;
  if (s == "table") return Category::table;
  throw ValidityError("unknown category '" + std::string(s) + "'");
}

Part part_from_string(std::string_view s) {
  for (Part p : kAllParts) {
    if (to_string(p) == s) return p;
  }
  throw ValidityError("unknown part '" + std::string(s) + "'");
}

Attribute attribute_from_string(std::string_view s) {
  for (Attribute a : {Attribute::length, Attribute::thickness, Attribute::width}) {
    if (to_string(a) == s) return a;
  }
  throw ValidityError("unknown attribute '" + std::string(s) + "'");
}

Direction direction_from_string(std::string_view s) {
  if (s == "+") return Direction::increase;
  if (s == "-") return Direction::decrease;
  throw ValidityError("unknown direction '" + std::string(s) + "'");
}

const ParamBounds& bounds_for(Category category) {
  return category == Category::chair ? kChairBounds : kTableBounds;
}

ShapeParams midpoint_chair() { return midpoint(Category::chair); }
ShapeParams midpoint_table() { return midpoint(Category::table); }

bool param_active(const ShapeParams& p, Param param) {
  switch (param) {
    case Param::back_height:
    case Param::back_thickness:
      return p.has_back;
    case Param::arm_height:
    case Param::arm_thickness:
      return p.has_arms;
    default:
      return true;
  }
}

void validate(const ShapeParams& p) {
  if (p.category == Category::table && (p.has_back || p.has_arms)) {
    throw ValidityError("tables have neither back nor arms");
  }
  if (p.category == Category::chair && !p.has_back) {
    throw ValidityError("chairs always have a back");
  }
  const auto& b = bounds_for(p.category);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const double v = p.values[i];
    if (!std::isfinite(v) || v < b[i].min || v > b[i].max) {
      throw ValidityError(std::string(kParamNames[i]) + " = " + std::to_string(v) +
                          " outside [" + std::to_string(b[i].min) + ", " +
                          std::to_string(b[i].max) + "]");
    }
  }
}

std::span<const EditAxis> all_axes() { return kAxes; }

std::vector<EditAxis> active_axes(const ShapeParams& p) {
  std::vector<EditAxis> out;
  for (const auto& axis : kAxes) {
    if (param_active(p, axis.param)) out.push_back(axis);
  }
  return out;
}

std::optional<EditAxis> find_axis(Part part, Attribute attribute) {
  for (const auto& axis : kAxes) {
    if (axis.part == part && axis.attribute == attribute) return axis;
  }
  return std::nullopt;
}

double Box::volume() const {
  return (max[0] - min[0]) * (max[1] - min[1]) * (max[2] - min[2]);
}

BoxSet realize_shape(const ShapeParams& p) {
  validate(p);
  const double lh = p.get(Param::leg_height);
  const double lt = p.get(Param::leg_thickness);
  const double sw = p.get(Param::seat_width);
  const double sd = p.get(Param::seat_depth);
  const double st = p.get(Param::seat_thickness);
  const double hx = 0.5 * sw;
  const double hz = 0.5 * sd;

  BoxSet out;
  for (double sx : {-1.0, 1.0}) {
    for (double sz : {-1.0, 1.0}) {
      const double x0 = sx < 0 ? -hx : hx - lt;
      const double z0 = sz < 0 ? -hz : hz - lt;
      out.boxes.push_back(make_box(x0, x0 + lt, -lh, 0.0, z0, z0 + lt, Part::legs));
    }
  }
  out.boxes.push_back(make_box(-hx, hx, 0.0, st, -hz, hz, Part::seat));

  double arm_front_of = -hz;
  if (p.has_back) {
    const double bh = p.get(Param::back_height);
    const double bt = p.get(Param::back_thickness);
    out.boxes.push_back(make_box(-hx, hx, st, st + bh, -hz, -hz + bt, Part::back));
    arm_front_of = -hz + bt;
  }
  if (p.has_arms) {
    const double ah = p.get(Param::arm_height);
    const double at = p.get(Param::arm_thickness);
    out.boxes.push_back(make_box(-hx, -hx + at, st, st + ah, arm_front_of, hz, Part::armrests));
    out.boxes.push_back(make_box(hx - at, hx, st, st + ah, arm_front_of, hz, Part::armrests));
  }
  return out;
}

bool occupancy(const BoxSet& shape, const Vec3& x) {
  return std::any_of(shape.boxes.begin(), shape.boxes.end(), [&](const Box& b) {
    return x[0] >= b.min[0] && x[0] <= b.max[0] && x[1] >= b.min[1] && x[1] <= b.max[1] &&
           x[2] >= b.min[2] && x[2] <= b.max[2];
  });
}

double volume(const BoxSet& shape) {
  double total = 0.0;
  for (const auto& b : shape.boxes) total += b.volume();
  return total;
}

double intersection_volume(const Box& a, const Box& b) {
  double v = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a.min[k], b.min[k]);
    const double hi = std::min(a.max[k], b.max[k]);
    if (hi <= lo) return 0.0;
    v *= hi - lo;
  }
  return v;
}

double box_region_volume(const Box& box, std::span<const Box> region) {
  std::vector<Box> clipped;
  for (const auto& r : region) {
    Box c = r;
    bool empty = false;
    for (int k = 0; k < 3; ++k) {
      c.min[k] = std::max(box.min[k], r.min[k]);
      c.max[k] = std::min(box.max[k], r.max[k]);
      if (c.max[k] <= c.min[k]) empty = true;
    }
    if (!empty) clipped.push_back(c);
  }
  if (clipped.empty()) return 0.0;
  if (clipped.size() == 1) return clipped.front().volume();

  // Coordinate compression over the clipped boxes: every cell of the induced
  // grid is either fully inside or fully outside the union.
  std::array<std::vector<double>, 3> cuts;
  for (int k = 0; k < 3; ++k) {
    for (const auto& c : clipped) {
      cuts[k].push_back(c.min[k]);
      cuts[k].push_back(c.max[k]);
    }
    std::sort(cuts[k].begin(), cuts[k].end());
    cuts[k].erase(std::unique(cuts[k].begin(), cuts[k].end()), cuts[k].end());
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts[0].size(); ++i) {
    const double cx = 0.5 * (cuts[0][i] + cuts[0][i + 1]);
    for (std::size_t j = 0; j + 1 < cuts[1].size(); ++j) {
      const double cy = 0.5 * (cuts[1][j] + cuts[1][j + 1]);
      for (std::size_t l = 0; l + 1 < cuts[2].size(); ++l) {
        const double cz = 0.5 * (cuts[2][l] + cuts[2][l + 1]);
        const bool inside = std::any_of(clipped.begin(), clipped.end(), [&](const Box& c) {
          return cx > c.min[0] && cx < c.max[0] && cy > c.min[1] && cy < c.max[1] &&
                 cz > c.min[2] && cz < c.max[2];
        });
        if (inside) {
          total += (cuts[0][i + 1] - cuts[0][i]) * (cuts[1][j + 1] - cuts[1][j]) *
                   (cuts[2][l + 1] - cuts[2][l]);
        }
      }
    }
  }
  return total;
}

double region_volume(const BoxSet& shape, const BoxSet& region) {
  double total = 0.0;
  for (const auto& b : shape.boxes) total += box_region_volume(b, region.boxes);
  return total;
}

BoxSet swell(const BoxSet& boxes, double margin) {
  BoxSet out = boxes;
  for (auto& b : out.boxes) {
    for (int k = 0; k < 3; ++k) {
      b.min[k] -= margin;
      b.max[k] += margin;
    }
  }
  return out;
}

BoxSet select_parts(const BoxSet& shape, std::span<const Part> parts) {
  BoxSet out;
  for (const auto& b : shape.boxes) {
    if (std::find(parts.begin(), parts.end(), b.part) != parts.end()) out.boxes.push_back(b);
  }
  return out;
}

Box bounding_box(const BoxSet& shape) {
  Box out = shape.boxes.at(0);
  for (const auto& b : shape.boxes) {
    for (int k = 0; k < 3; ++k) {
      out.min[k] = std::min(out.min[k], b.min[k]);
      out.max[k] = std::max(out.max[k], b.max[k]);
    }
  }
  return out;
}

double shape_volume(const ShapeParams& p) {
  const double lh = p.get(Param::leg_height);
  const double lt = p.get(Param::leg_thickness);
  const double sw = p.get(Param::seat_width);
  const double sd = p.get(Param::seat_depth);
  const double st = p.get(Param::seat_thickness);
  double v = 4.0 * lt * lt * lh + sw * sd * st;
  double arm_depth = sd;
  if (p.has_back) {
    v += sw * p.get(Param::back_height) * p.get(Param::back_thickness);
    arm_depth -= p.get(Param::back_thickness);
  }
  if (p.has_arms) v += 2.0 * p.get(Param::arm_thickness) * p.get(Param::arm_height) * arm_depth;
  return v;
}

}  // namespace partedit
