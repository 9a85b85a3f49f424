#include "unite/hashing.hpp"

#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "unite/error.hpp"

namespace unite {

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open '{}' for hashing", path));
    std::uint64_t h = kFnvOffset;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return hex64(h);
}

}  // namespace unite
