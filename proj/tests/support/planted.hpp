#pragma once

// Planted-signal task: source word k translates to reference word k, the
// offline provider returns the reference, and degradation removes tokens.
// The true quality of a hypothesis is the fraction of reference tokens it
// still contains.

#include <cstddef>
#include <cstdint>
#include <string>

#include "unite/corpus.hpp"
#include "unite/datagen.hpp"

namespace planted {

struct Options {
    std::size_t words = 600;  // per language
    std::size_t min_len = 8;
    std::size_t max_len = 20;
};

// Parallel pairs (hyp empty, no score), alternating de-en and zh-en.
unite::Dataset parallel(std::size_t n, std::uint64_t seed, const std::string& id_prefix,
                        const Options& opts = {});

// Degraded hypotheses scored with the true surviving fraction.
unite::Dataset human(std::size_t n, std::uint64_t seed, const std::string& id_prefix,
                     unite::Provenance provenance, const unite::DegradeConfig& degrade,
                     const Options& opts = {});

}  // namespace planted
