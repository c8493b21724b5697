#pragma once

#include <stdexcept>
#include <string>

namespace dcap {

// Tensor/block shape contract violations (channel mismatch, rank, extents).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Geometry that produces an empty or impossible output (zero-size conv
// output, pooling window larger than the padded input).
class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Bad scalar arguments / preconditions (non-scalar loss, zero-area box, ...).
class ValueError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Config file problems: unknown keys, unparsable values. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem / format problems: unreadable paths, malformed PGM or label
// files, checkpoint magic mismatch. CLI exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training. CLI exit code 4.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Evaluation cannot produce a defined report (empty ground truth,
// checkpoint/config hash mismatch). CLI exit code 5.
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dcap
