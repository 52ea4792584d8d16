#pragma once

#include "mcq/quantizer.hpp"

#include <filesystem>
#include <string>

namespace mcq {

/// Report JSON, keys in a fixed order. Real numbers use the shortest
/// decimal form that round-trips.
std::string report_to_json(const QuantReport& report);
void write_report(const QuantReport& report, const std::filesystem::path& path);

} // namespace mcq
