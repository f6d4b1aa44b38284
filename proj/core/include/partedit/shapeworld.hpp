#pragma once

// Parametric chair/table world. Shapes are unions of labeled, pairwise
// disjoint axis-aligned boxes, so volumes are exact sums.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace partedit {

class ValidityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Category { chair, table };
enum class Part { legs, seat, back, armrests };
enum class Attribute { length, thickness, width };
enum class Direction { increase, decrease };

/// Continuous shape parameters, in serialization order.
enum class Param : std::size_t {
  leg_height,
  leg_thickness,
  seat_width,
  seat_depth,
  seat_thickness,
  back_height,
  back_thickness,
  arm_height,
  arm_thickness,
};
inline constexpr std::size_t kParamCount = 9;

std::string_view to_string(Category c);
std::string_view to_string(Part p);
std::string_view to_string(Attribute a);
std::string_view to_string(Direction d);
std::string_view to_string(Param p);
Category category_from_string(std::string_view s);
Part part_from_string(std::string_view s);
Attribute attribute_from_string(std::string_view s);
Direction direction_from_string(std::string_view s);

inline constexpr std::array<Part, 4> kAllParts{Part::legs, Part::seat, Part::back,
                                               Part::armrests};

struct ParamRange {
  double min = 0.0;
  double max = 0.0;
};

using ParamBounds = std::array<ParamRange, kParamCount>;

/// Valid range of every continuous parameter for a category.
const ParamBounds& bounds_for(Category category);

struct ShapeParams {
  Category category = Category::chair;
  std::array<double, kParamCount> values{};
  bool has_arms = false;
  bool has_back = true;

  [[nodiscard]] double get(Param p) const { return values[static_cast<std::size_t>(p)]; }
  void set(Param p, double v) { values[static_cast<std::size_t>(p)] = v; }
  friend bool operator==(const ShapeParams&, const ShapeParams&) = default;
};

/// Chair with every parameter at the middle of its range, back and arms present.
ShapeParams midpoint_chair();
ShapeParams midpoint_table();

/// Parameters that shape geometry for these flags (tables ignore back and arm
/// parameters, armless chairs ignore arm parameters).
bool param_active(const ShapeParams& p, Param param);

/// Throws ValidityError when a parameter is outside its range or the flags
/// contradict the category.
void validate(const ShapeParams& p);

/// One editable (part, attribute) axis and the parameter it scales.
struct EditAxis {
  Part part;
  Attribute attribute;
  Param param;
  friend bool operator==(const EditAxis&, const EditAxis&) = default;
};

std::span<const EditAxis> all_axes();
std::vector<EditAxis> active_axes(const ShapeParams& p);
std::optional<EditAxis> find_axis(Part part, Attribute attribute);

using Vec3 = std::array<double, 3>;

struct Box {
  Vec3 min{};
  Vec3 max{};
  Part part = Part::seat;

  [[nodiscard]] double volume() const;
};

struct BoxSet {
  std::vector<Box> boxes;
};

/// Layout: seat underside on y = 0, legs hang below the seat corners, back on
/// the rear edge (z min) above the seat, arms on the side edges above the seat.
BoxSet realize_shape(const ShapeParams& p);

/// Closed boxes: boundary points count as inside.
bool occupancy(const BoxSet& shape, const Vec3& x);

double volume(const BoxSet& shape);
/// Volume of box intersected with the union of the region boxes.
double box_region_volume(const Box& box, std::span<const Box> region);
/// Volume of shape (disjoint boxes) inside the union of the region boxes.
double region_volume(const BoxSet& shape, const BoxSet& region);
double intersection_volume(const Box& a, const Box& b);
/// Expands every box by margin on each face.
BoxSet swell(const BoxSet& boxes, double margin);
BoxSet select_parts(const BoxSet& shape, std::span<const Part> parts);
/// Axis-aligned bounds of all boxes.
Box bounding_box(const BoxSet& shape);

/// Closed-form total volume, identical in value to volume(realize_shape(p)).
double shape_volume(const ShapeParams& p);

}  // namespace partedit
