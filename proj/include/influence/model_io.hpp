#pragma once

#include <filesystem>
#include <string>

#include "influence/models.hpp"

namespace influence {

struct TrainMeta {
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;

    friend bool operator==(const TrainMeta&, const TrainMeta&) = default;
};

/// A trained parameter point together with the spec that produced it.
struct ModelArtifact {
    ModelSpec spec;
    std::size_t n_features = 0;
    Vector theta;
    TrainMeta train_meta;

    friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

inline constexpr int kModelFormatVersion = 1;

/// JSON document: format_version, model_type, l2, temperature, n_features,
/// n_classes, theta (flat, class-major for multinomial), train_meta.
std::string model_to_json(const ModelArtifact& artifact);
/// Throws DataError on unknown version, missing fields or a theta length
/// that disagrees with n_features and n_classes.
ModelArtifact model_from_json(const std::string& text);

void save_model(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_model(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the bytes of theta.
std::string fingerprint(std::span<const double> theta);

}  // namespace influence
