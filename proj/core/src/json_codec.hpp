#pragma once

// Internal JSON helpers shared by the model/report writers. Not installed.

#include <json.hpp>

#include "boundcf/nn.hpp"

namespace boundcf::detail {

using json = nlohmann::json;

json network_to_json(const nn::Network& network);
nn::Network network_from_json(const json& doc);

json vector_to_json(const nn::Vector& v);
nn::Vector vector_from_json(const json& doc);

// Serialises with a fixed key order and shortest round-trip numbers.
std::string dump(const json& doc);

}  // namespace boundcf::detail
