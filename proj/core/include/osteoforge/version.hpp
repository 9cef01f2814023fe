#pragma once

#include <string_view>

namespace osteoforge {

std::string_view version();

}  // namespace osteoforge
