#include "osteoforge/version.hpp"

namespace osteoforge {

std::string_view version() { return OSTEOFORGE_VERSION; }

}  // namespace osteoforge
