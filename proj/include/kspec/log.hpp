#pragma once

#include <iostream>
#include <string_view>

namespace kspec {

inline void log_warning(std::string_view message) {
    std::cerr << "warning: " << message << '\n';
}

}  // namespace kspec
