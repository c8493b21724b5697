#pragma once

// Plain key=value run configuration covering the model, the synthetic
// corpus, and the training hyperparameters. Unknown keys are rejected so a
// typo cannot silently fall back to a default.

#include <string>

#include "dcap/data.hpp"
#include "dcap/detector.hpp"

namespace dcap {

struct RunConfig {
    ModelConfig model;
    SynthSpec synth;
    int epochs = 200;
    double lr = 0.01;
    int batch_size = 8;

    static RunConfig parse_text(const std::string& text);
    static RunConfig parse_file(const std::string& path);

    // canonical text of everything that affects outputs, for hashing
    std::string canonical_text() const;
    std::uint64_t hash() const;
};

} // namespace dcap
