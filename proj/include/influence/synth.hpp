#pragma once

// Seeded synthetic datasets, addressed by pseudo-paths of the form
// "synth:<kind>:key=value,key=value". Every generator draws its fixed
// structure (class means, true weights, word distributions) from `world`
// and its samples from `seed`, so a test set is the same kind with another
// seed.
//
//   logistic    n=500 d=20 sep=1 positive=0   x = y*mu + N(0, I), |mu| = sep;
//                                             positive=1 takes |x|
//   margin      as logistic with n=5000 sep=1.5
//   ridge       n=50 d=5 noise=0.1            y = w.x + noise * N(0, 1)
//   multiclass  n=300 d=10 k=3 sep=1.5        x = mu_y + N(0, I)
//   bow         n=2000 d=100 len=40 spam=0.4  word counts, two topic mixtures
//   attack      n=100 d=20 l2=0.01 targets=1 part=train|test
//               features on the 8-bit grid in [0,1]; the last two columns
//               are a rare feature (set only in row 0 and the targets) and
//               a constant. Row 0 sits between the class means, labelled -1.
//               The test part holds +1 targets placed where a logistic model
//               trained on the train part predicts p = 0.5 + 1e-4

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "influence/dataset.hpp"

namespace influence {

struct SynthRequest {
    std::string kind;
    std::map<std::string, std::string> params;

    double number(const std::string& key, double fallback) const;
    std::uint64_t integer(const std::string& key, std::uint64_t fallback) const;
    std::string text(const std::string& key, const std::string& fallback) const;
};

bool is_synth_path(std::string_view path);
/// Throws DataError on a malformed request or unknown kind.
SynthRequest parse_synth_path(std::string_view path);

Dataset make_synthetic(const SynthRequest& request);
Dataset make_synthetic(std::string_view path);

/// Target probability assigned to attack test points.
inline constexpr double kAttackTargetProb = 0.5 + 1e-4;

}  // namespace influence
