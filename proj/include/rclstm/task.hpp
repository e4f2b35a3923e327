#pragma once

#include <cstdint>
#include <string>

#include "rclstm/error.hpp"

namespace rclstm {

enum class Task : std::uint8_t { regression = 0, classification = 1 };

inline const char* to_string(Task t) noexcept { return t == Task::classification ? "classification" : "regression"; }

inline Task parse_task(const std::string& s)
{
    if (s == "regression") return Task::regression;
    if (s == "classification") return Task::classification;
    throw DomainError("unknown task '" + s + "'");
}

}  // namespace rclstm
