#pragma once

#include <map>
#include <string>
#include <vector>

#include "influence/ihvp.hpp"
#include "influence/model_io.hpp"

namespace influence {

/// One row of an influence report.
struct InfluenceScore {
    std::size_t train_idx = 0;
    /// d L(z_test, theta_eps) / d eps at eps = 0, per unit weight.
    double i_up_loss = 0.0;
    /// -i_up_loss / n: first-order estimate of the LOO change in test loss.
    double predicted_loo_delta = 0.0;
};

struct InfluenceReport {
    /// "test:<idx>", "self" or another caller-chosen label.
    std::string target;
    /// Sorted by |i_up_loss| descending, ties by ascending train_idx.
    std::vector<InfluenceScore> scores;
    IhvpDiagnostics diagnostics;
    std::string model_fingerprint;
    std::string note;

    /// Score for a training index (reports cover every index once).
    const InfluenceScore& score_for(std::size_t train_idx) const;
};

/// Sorts scores by |i_up_loss| descending with ascending index tie-break.
void rank_scores(std::vector<InfluenceScore>& scores);

/// Closed-form logistic influence and the three ablations of it.
struct VariantRow {
    std::size_t train_idx = 0;
    double full = 0.0;
    double no_train_loss = 0.0;
    double identity_hessian = 0.0;
    double scaled_dot = 0.0;
};

/// Influence computations for one trained model on its training set. The
/// iHVP solver is built once; s_test vectors are cached per test point.
/// Not safe to use from several threads at once.
class InfluenceEngine {
  public:
    InfluenceEngine(ModelArtifact artifact, const Dataset& train, IhvpConfig config);

    const ModelArtifact& artifact() const { return artifact_; }
    const Dataset& train() const { return *train_; }
    const IhvpSolver& solver() const { return solver_; }
    const std::string& fingerprint() const { return fingerprint_; }

    /// H^-1 grad L(z_test, theta). Cached by (point, method, damping).
    const Vector& s_test(ExampleRef z_test);
    const IhvpDiagnostics& s_test_diagnostics(ExampleRef z_test);

    /// -H^-1 grad L(z, theta).
    Vector up_params(ExampleRef z) const;

    /// -s_test . grad L(z, theta).
    double up_loss(ExampleRef z, ExampleRef z_test);

    /// One s_test solve and n inner products.
    InfluenceReport up_loss_batch(ExampleRef z_test, std::string target);

    /// Ranking by |i_up_loss(z_i, z_i)| = grad_i' H^-1 grad_i. One solve per
    /// training point.
    InfluenceReport self_influence();

    /// -s_test' d/dx grad_theta L(z, theta): effect on the test loss per
    /// unit feature perturbation of z.
    Vector pert_loss(ExampleRef z, ExampleRef z_test);

    /// Binary logistic only.
    std::vector<VariantRow> variants(ExampleRef z_test);

  private:
    struct CacheEntry {
        Vector s;
        IhvpDiagnostics diagnostics;
    };
    const CacheEntry& cached(ExampleRef z_test);

    ModelArtifact artifact_;
    const Dataset* train_;
    IhvpSolver solver_;
    std::string fingerprint_;
    std::map<std::string, CacheEntry> cache_;
};

// Free-function front ends.

Vector s_test(const ModelArtifact& artifact, const Dataset& data, ExampleRef z_test,
              const IhvpConfig& config);
Vector influence_up_params(const ModelArtifact& artifact, const Dataset& data, ExampleRef z,
                           const IhvpConfig& config);
InfluenceReport influence_up_loss_batch(const ModelArtifact& artifact, const Dataset& data,
                                        ExampleRef z_test, const IhvpConfig& config,
                                        std::string target = "test");
Vector influence_pert_loss(const ModelArtifact& artifact, const Dataset& data, ExampleRef z,
                           ExampleRef z_test, const IhvpConfig& config);
std::vector<VariantRow> influence_variants(const ModelArtifact& artifact, const Dataset& data,
                                           ExampleRef z_test, const IhvpConfig& config = {});

}  // namespace influence
