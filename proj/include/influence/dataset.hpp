#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace influence {

using Vector = std::vector<double>;

enum class Task {
    binary,      // labels stored as -1 / +1
    multiclass,  // labels stored as 0 .. k-1
    regression,  // real-valued targets
};

/// Non-owning view of one example z = (x, y).
struct ExampleRef {
    std::span<const double> x;
    double y = 0.0;
};

/// Owning example, used for test points and perturbed copies.
struct Example {
    Vector features;
    double label = 0.0;

    ExampleRef view() const { return {features, label}; }
};

/// Dense row-major feature matrix plus labels. Row indices are the stable
/// identifiers used by every report.
class Dataset {
  public:
    Dataset() = default;
    /// Validates finiteness and label range; throws DataError.
    Dataset(std::size_t dim, Task task, int n_classes, Vector features, Vector labels);

    std::size_t size() const { return labels_.size(); }
    std::size_t dim() const { return dim_; }
    Task task() const { return task_; }
    /// 2 for binary, k for multiclass, 0 for regression.
    int n_classes() const { return n_classes_; }

    ExampleRef operator[](std::size_t i) const;
    Example example(std::size_t i) const;

    std::span<const double> features() const { return features_; }
    std::span<const double> labels() const { return labels_; }
    std::span<const double> row(std::size_t i) const;

    /// Mutators for the attack and triage workflows, which work on copies.
    void set_row(std::size_t i, std::span<const double> values);
    void set_label(std::size_t i, double label);

    /// New dataset holding the listed rows in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;

  private:
    void check_label(double y, std::size_t index) const;

    std::size_t dim_ = 0;
    Task task_ = Task::binary;
    int n_classes_ = 2;
    Vector features_;
    Vector labels_;
};

struct ParseOptions {
    /// Declared class count. Unset means: infer from the labels.
    std::optional<int> n_classes;
    /// Treat labels as real-valued regression targets.
    bool regression = false;
};

Dataset parse_csv(const std::filesystem::path& path, const ParseOptions& options = {});
Dataset parse_csv_text(const std::string& text, const ParseOptions& options = {});
void write_csv(const Dataset& data, const std::filesystem::path& path);
std::string to_csv_text(const Dataset& data);

Dataset parse_svmlight(const std::filesystem::path& path, const ParseOptions& options = {});
Dataset parse_svmlight_text(const std::string& text, const ParseOptions& options = {});
void write_svmlight(const Dataset& data, const std::filesystem::path& path);
std::string to_svmlight_text(const Dataset& data);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

}  // namespace influence
