#pragma once

// Scenario files: the JSON form of a SimConfig. All durations are given in
// milliseconds in the file and converted to the engine's microsecond clock.
// Parsing is strict: unknown keys, bad types, and out-of-range values are
// errors, each reported with the path of the offending field.

#include <stdexcept>
#include <string>

#include "sim.hpp"

namespace xdx::scenario {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// throws ParseError with field context on any schema or range problem
sim::SimConfig from_json(const std::string& text);
sim::SimConfig from_file(const std::string& path);

// canonical serialization; from_json(to_json(c)) reproduces c
std::string to_json(const sim::SimConfig& cfg);

}  // namespace xdx::scenario
