#pragma once

#include <stdexcept>
#include <string>

namespace mambatext {

// Error taxonomy. The CLI maps these onto its exit-code contract, so new
// failure modes should reuse an existing type where one fits.

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LabelOutOfRange : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LengthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonScalarLoss : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SingularMatrix : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TokenOutOfRange : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptySequence : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct AllMasked : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyMatrix : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SingleClassLabels : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidSpec : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyTrainingSet : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TooFewSamples : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptySplit : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DivergedLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BadMagic : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VersionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ChecksumMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible artifacts handed to a command (vocab vs. embedding, class
// count vs. head width, ...).
struct ArtifactMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mambatext
