#pragma once

#include <iostream>
#include <string_view>

namespace unite {

inline void log_warning(std::string_view message) {
    std::clog << "warning: " << message << '\n';
}

inline void log_info(std::string_view message) {
    std::clog << "info: " << message << '\n';
}

}  // namespace unite
