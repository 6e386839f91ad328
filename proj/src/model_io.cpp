#include "influence/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "influence/error.hpp"

namespace influence {

using nlohmann::json;

std::string model_to_json(const ModelArtifact& artifact) {
    json doc;
    doc["format_version"] = kModelFormatVersion;
    doc["model_type"] = std::string(family_name(artifact.spec.family));
    doc["l2"] = artifact.spec.l2;
    doc["temperature"] = artifact.spec.temperature;
    doc["n_features"] = artifact.n_features;
    doc["n_classes"] = artifact.spec.n_classes;
    doc["theta"] = artifact.theta;
    doc["train_meta"] = {{"objective", artifact.train_meta.objective},
                         {"grad_norm", artifact.train_meta.grad_norm},
                         {"iterations", artifact.train_meta.iterations}};
    return doc.dump(2) + "\n";
}

ModelArtifact model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (!doc.contains("format_version")) throw DataError("model file lacks format_version");
        const int version = doc.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("unsupported model format_version " + std::to_string(version));
        }
        ModelArtifact out;
        out.spec.family = parse_family(doc.at("model_type").get<std::string>());
        out.spec.l2 = doc.at("l2").get<double>();
        out.spec.temperature = doc.value("temperature", 1.0);
        out.spec.n_classes = doc.at("n_classes").get<int>();
        out.n_features = doc.at("n_features").get<std::size_t>();
        out.theta = doc.at("theta").get<Vector>();
        const auto& meta = doc.at("train_meta");
        out.train_meta.objective = meta.at("objective").get<double>();
        out.train_meta.grad_norm = meta.at("grad_norm").get<double>();
        out.train_meta.iterations = meta.at("iterations").get<int>();
        out.spec.validate();
        const std::size_t expected = out.spec.n_params(out.n_features);
        if (out.theta.size() != expected) {
            throw DataError("theta has " + std::to_string(out.theta.size()) + " entries, expected " +
                            std::to_string(expected));
        }
        return out;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file schema mismatch: ") + e.what());
    }
}

void save_model(const ModelArtifact& artifact, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file: " + path.string());
    out << model_to_json(artifact);
}

ModelArtifact load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

std::string fingerprint(std::span<const double> theta) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : theta) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace influence
