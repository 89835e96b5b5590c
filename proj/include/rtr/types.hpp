#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rtr {

using VehicleId = int;

enum class VehicleKind { CAV, HDV };
enum class DrivingStyle { Aggressive, Normal, Conservative };

/// Passing intention, coded as in the order formulation: rush = 0, yield = 1.
enum class Intention { Rush = 0, Yield = 1 };

std::string_view to_string(VehicleKind kind);
std::string_view to_string(DrivingStyle style);
std::string_view to_string(Intention intention);

VehicleKind parse_vehicle_kind(std::string_view text);
DrivingStyle parse_driving_style(std::string_view text);
Intention parse_intention(std::string_view text);

/// Input that fails validation; `field` is a dotted path into the offending document.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace rtr
