#include "influence/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include "influence/error.hpp"
#include "influence/kernels.hpp"
#include "influence/trainer.hpp"

namespace influence {

namespace {

using Rng = std::mt19937_64;

// Distinct streams for the fixed structure and for the samples.
constexpr std::uint64_t kWorldSalt = 0x9e3779b97f4a7c15ULL;

Rng world_rng(const SynthRequest& r) { return Rng(r.integer("world", 0) ^ kWorldSalt); }
Rng sample_rng(const SynthRequest& r) { return Rng(r.integer("seed", 0)); }

void require_keys(const SynthRequest& r, std::set<std::string> allowed) {
    allowed.insert({"seed", "world"});
    for (const auto& [key, value] : r.params) {
        if (!allowed.contains(key)) {
            throw DataError("synth:" + r.kind + " does not take parameter '" + key + "'");
        }
    }
}

std::size_t count_param(const SynthRequest& r, const std::string& key, std::uint64_t fallback) {
    const auto v = r.integer(key, fallback);
    if (v == 0) throw DataError("synth parameter " + key + " must be positive");
    return static_cast<std::size_t>(v);
}

Vector random_direction(Rng& rng, std::size_t d, double norm) {
    std::normal_distribution<double> normal;
    Vector v(d);
    for (auto& x : v) x = normal(rng);
    const double len = simd::norm2(v);
    simd::scale(norm / len, v);
    return v;
}

double pm_label(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; }

Dataset gaussian_binary(const SynthRequest& r, std::size_t default_n, double default_sep) {
    require_keys(r, {"n", "d", "sep", "positive"});
    const std::size_t n = count_param(r, "n", default_n);
    const std::size_t d = count_param(r, "d", 20);
    const double sep = r.number("sep", default_sep);
    const bool positive = r.integer("positive", 0) != 0;

    Rng world = world_rng(r);
    const Vector mu = random_direction(world, d, sep);
    Rng rng = sample_rng(r);
    std::normal_distribution<double> normal;
    Vector features(n * d);
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = pm_label(rng);
        for (std::size_t j = 0; j < d; ++j) {
            double x = labels[i] * mu[j] + normal(rng);
            if (positive) x = std::abs(x);
            features[i * d + j] = x;
        }
    }
    return Dataset(d, Task::binary, 2, std::move(features), std::move(labels));
}

Dataset ridge_data(const SynthRequest& r) {
    require_keys(r, {"n", "d", "noise"});
    const std::size_t n = count_param(r, "n", 50);
    const std::size_t d = count_param(r, "d", 5);
    const double noise = r.number("noise", 0.1);
    Rng world = world_rng(r);
    const Vector w = random_direction(world, d, 1.0);
    Rng rng = sample_rng(r);
    std::normal_distribution<double> normal;
    Vector features(n * d);
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) features[i * d + j] = normal(rng);
        labels[i] = simd::dot(w, std::span<const double>(features).subspan(i * d, d)) + noise * normal(rng);
    }
    return Dataset(d, Task::regression, 0, std::move(features), std::move(labels));
}

Dataset multiclass_data(const SynthRequest& r) {
    require_keys(r, {"n", "d", "k", "sep"});
    const std::size_t n = count_param(r, "n", 300);
    const std::size_t d = count_param(r, "d", 10);
    const std::size_t k = count_param(r, "k", 3);
    if (k < 2) throw DataError("synth:multiclass needs k >= 2");
    const double sep = r.number("sep", 1.5);
    Rng world = world_rng(r);
    std::vector<Vector> means;
    for (std::size_t c = 0; c < k; ++c) means.push_back(random_direction(world, d, sep));
    Rng rng = sample_rng(r);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    Vector features(n * d);
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = pick(rng);
        labels[i] = static_cast<double>(c);
        for (std::size_t j = 0; j < d; ++j) features[i * d + j] = means[c][j] + normal(rng);
    }
    return Dataset(d, Task::multiclass, static_cast<int>(k), std::move(features), std::move(labels));
}

// Documents are word-count vectors. Both classes share a background word
// distribution; a block of "spam" words is boosted for +1 and a block of
// "ham" words for -1, each covering a tenth of the vocabulary.
Dataset bow_data(const SynthRequest& r) {
    require_keys(r, {"n", "d", "len", "spam"});
    const std::size_t n = count_param(r, "n", 2000);
    const std::size_t d = count_param(r, "d", 100);
    const auto len = static_cast<int>(count_param(r, "len", 40));
    const double spam = r.number("spam", 0.4);
    if (!(spam > 0.0 && spam < 1.0)) throw DataError("synth:bow spam fraction must be in (0, 1)");

    Rng world = world_rng(r);
    std::normal_distribution<double> normal;
    Vector background(d);
    for (auto& b : background) b = std::exp(normal(world));
    const std::size_t block = std::max<std::size_t>(1, d / 10);
    Vector spam_w = background;
    Vector ham_w = background;
    for (std::size_t j = 0; j < block && j < d; ++j) spam_w[j] *= 3.0;
    for (std::size_t j = block; j < 2 * block && j < d; ++j) ham_w[j] *= 3.0;

    std::discrete_distribution<std::size_t> spam_words(spam_w.begin(), spam_w.end());
    std::discrete_distribution<std::size_t> ham_words(ham_w.begin(), ham_w.end());
    Rng rng = sample_rng(r);
    std::bernoulli_distribution is_spam(spam);
    std::uniform_int_distribution<int> length(len / 2, len + len / 2);
    Vector features(n * d, 0.0);
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool s = is_spam(rng);
        labels[i] = s ? 1.0 : -1.0;
        const int words = length(rng);
        for (int w = 0; w < words; ++w) {
            const std::size_t j = s ? spam_words(rng) : ham_words(rng);
            features[i * d + j] += 1.0;
        }
    }
    return Dataset(d, Task::binary, 2, std::move(features), std::move(labels));
}

double to_grid(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// Column layout: m common features, one rare feature, a constant 1.
// The rare feature is nonzero only in the ambiguous row 0 and in the targets,
// so row 0 alone pins its weight and the targets lean on it.
constexpr double kRareValue = 204.0 / 255.0;

Dataset attack_train(const SynthRequest& r) {
    const std::size_t n = count_param(r, "n", 100);
    const std::size_t d = count_param(r, "d", 20);
    if (d < 3) throw DataError("synth:attack needs d >= 3 (rare and constant columns)");
    const std::size_t m = d - 2;

    Rng world = world_rng(r);
    std::uniform_real_distribution<double> offset(-0.1, 0.1);
    Vector mu_pos(m);
    Vector mu_neg(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double o = offset(world);
        mu_pos[j] = 0.6 + o;
        mu_neg[j] = 0.4 + o;
    }

    Rng rng = sample_rng(r);
    std::normal_distribution<double> normal(0.0, 0.15);
    Vector features(n * d);
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = features.data() + i * d;
        if (i == 0) {
            // The ambiguous point: halfway between the class means, labelled -1.
            labels[i] = -1.0;
            for (std::size_t j = 0; j < m; ++j) row[j] = to_grid(0.5 * (mu_pos[j] + mu_neg[j]));
            row[m] = kRareValue;
        } else {
            labels[i] = pm_label(rng);
            const Vector& mu = labels[i] > 0 ? mu_pos : mu_neg;
            for (std::size_t j = 0; j < m; ++j) row[j] = to_grid(mu[j] + normal(rng));
        }
        row[m + 1] = 1.0;
    }
    return Dataset(d, Task::binary, 2, std::move(features), std::move(labels));
}

Dataset attack_test(const SynthRequest& r) {
    SynthRequest train_req = r;
    train_req.params.erase("part");
    train_req.params.erase("targets");
    train_req.params.erase("l2");
    const Dataset train_data = attack_train(train_req);
    const std::size_t d = train_data.dim();
    const std::size_t m = d - 2;

    ModelSpec spec;
    spec.family = Family::binary_logistic;
    spec.l2 = r.number("l2", 0.01);
    TrainConfig config;
    config.tol_grad = 1e-12;
    const ModelArtifact model = train(spec, train_data, config);
    const auto& theta = model.theta;
    double w2 = 0.0;
    for (std::size_t j = 0; j < m; ++j) w2 += theta[j] * theta[j];
    if (w2 == 0.0) throw DataError("synth:attack model has no feature weight");
    const double target_logit = std::log(kAttackTargetProb / (1.0 - kAttackTargetProb));

    const std::size_t targets = count_param(r, "targets", 1);
    Rng rng(r.integer("seed", 0) + 1);
    std::normal_distribution<double> normal(0.0, 0.05);
    Vector features(targets * d);
    Vector labels(targets, 1.0);
    const auto ambiguous = train_data.row(0);
    for (std::size_t t = 0; t < targets; ++t) {
        double* row = features.data() + t * d;
        for (std::size_t j = 0; j < m; ++j) row[j] = ambiguous[j] + (t == 0 ? 0.0 : normal(rng));
        row[m] = kRareValue;
        row[m + 1] = 1.0;
        // Slide along the common-feature weights onto the chosen probability level.
        const double logit = simd::dot(theta, std::span<const double>(row, d));
        const double step = (target_logit - logit) / w2;
        for (std::size_t j = 0; j < m; ++j) row[j] += step * theta[j];
    }
    return Dataset(d, Task::binary, 2, std::move(features), std::move(labels));
}

Dataset attack_data(const SynthRequest& r) {
    require_keys(r, {"n", "d", "l2", "targets", "part"});
    const std::string part = r.text("part", "train");
    if (part == "train") return attack_train(r);
    if (part == "test") return attack_test(r);
    throw DataError("synth:attack part must be train or test");
}

}  // namespace

double SynthRequest::number(const std::string& key, double fallback) const {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    const std::string& s = it->second;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
        throw DataError("synth parameter " + key + " is not a number: '" + s + "'");
    }
    return value;
}

std::uint64_t SynthRequest::integer(const std::string& key, std::uint64_t fallback) const {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    const std::string& s = it->second;
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError("synth parameter " + key + " is not a non-negative integer: '" + s + "'");
    }
    return value;
}

std::string SynthRequest::text(const std::string& key, const std::string& fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

bool is_synth_path(std::string_view path) { return path.starts_with("synth:"); }

SynthRequest parse_synth_path(std::string_view path) {
    if (!is_synth_path(path)) throw DataError("not a synth path: " + std::string(path));
    std::string_view rest = path.substr(6);
    SynthRequest req;
    const auto colon = rest.find(':');
    req.kind = std::string(rest.substr(0, colon));
    if (req.kind.empty()) throw DataError("synth path has no kind: " + std::string(path));
    if (colon == std::string_view::npos) return req;
    rest = rest.substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = rest.substr(0, comma);
        const auto eq = item.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw DataError("synth parameter must be key=value: '" + std::string(item) + "'");
        }
        req.params[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return req;
}

Dataset make_synthetic(const SynthRequest& request) {
    const std::string& kind = request.kind;
    if (kind == "logistic") return gaussian_binary(request, 500, 1.0);
    if (kind == "margin") return gaussian_binary(request, 5000, 1.5);
    if (kind == "ridge") return ridge_data(request);
    if (kind == "multiclass") return multiclass_data(request);
    if (kind == "bow") return bow_data(request);
    if (kind == "attack") return attack_data(request);
    throw DataError("unknown synth kind '" + kind + "'");
}

Dataset make_synthetic(std::string_view path) { return make_synthetic(parse_synth_path(path)); }

}  // namespace influence
