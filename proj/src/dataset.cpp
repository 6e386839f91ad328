#include "influence/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "influence/error.hpp"

namespace influence {

Dataset::Dataset(std::size_t dim, Task task, int n_classes, Vector features, Vector labels)
    : dim_(dim), task_(task), n_classes_(n_classes), features_(std::move(features)),
      labels_(std::move(labels)) {
    if (labels_.empty()) throw DataError("dataset must contain at least one example");
    if (features_.size() != labels_.size() * dim_) {
        throw DataError("feature matrix size " + std::to_string(features_.size()) +
                        " does not match n*d = " + std::to_string(labels_.size() * dim_));
    }
    switch (task_) {
        case Task::binary:
            if (n_classes_ != 2) throw DataError("binary dataset must have 2 classes");
            break;
        case Task::multiclass:
            if (n_classes_ < 2) throw DataError("multiclass dataset needs at least 2 classes");
            break;
        case Task::regression: n_classes_ = 0; break;
    }
    for (std::size_t i = 0; i < features_.size(); ++i) {
        if (!std::isfinite(features_[i])) {
            throw DataError("non-finite feature value in example " + std::to_string(i / dim_));
        }
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) check_label(labels_[i], i);
}

void Dataset::check_label(double y, std::size_t index) const {
    if (!std::isfinite(y)) throw DataError("non-finite label in example " + std::to_string(index));
    switch (task_) {
        case Task::binary:
            if (y != 1.0 && y != -1.0) {
                throw DataError("binary label must be -1 or +1 (example " + std::to_string(index) + ")");
            }
            break;
        case Task::multiclass:
            if (y != std::floor(y) || y < 0 || y >= n_classes_) {
                throw DataError("label out of range [0, " + std::to_string(n_classes_) +
                                ") in example " + std::to_string(index));
            }
            break;
        case Task::regression: break;
    }
}

ExampleRef Dataset::operator[](std::size_t i) const { return {row(i), labels_[i]}; }

Example Dataset::example(std::size_t i) const {
    auto r = row(i);
    return {Vector(r.begin(), r.end()), labels_[i]};
}

std::span<const double> Dataset::row(std::size_t i) const {
    if (i >= size()) throw DataError("example index " + std::to_string(i) + " out of range");
    return std::span<const double>(features_).subspan(i * dim_, dim_);
}

void Dataset::set_row(std::size_t i, std::span<const double> values) {
    if (i >= size()) throw DataError("example index " + std::to_string(i) + " out of range");
    if (values.size() != dim_) throw DataError("row has wrong dimension");
    for (double v : values) {
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    std::copy(values.begin(), values.end(), features_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
}

void Dataset::set_label(std::size_t i, double label) {
    if (i >= size()) throw DataError("example index " + std::to_string(i) + " out of range");
    check_label(label, i);
    labels_[i] = label;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Vector x;
    Vector y;
    x.reserve(indices.size() * dim_);
    y.reserve(indices.size());
    for (std::size_t i : indices) {
        auto r = row(i);
        x.insert(x.end(), r.begin(), r.end());
        y.push_back(labels_[i]);
    }
    return Dataset(dim_, task_, n_classes_, std::move(x), std::move(y));
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw DataError("cannot format number");
    return std::string(buf, end);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

std::vector<std::string_view> split_lines(const std::string& text) {
    std::vector<std::string_view> lines;
    std::string_view rest(text);
    while (!rest.empty()) {
        auto pos = rest.find('\n');
        lines.push_back(rest.substr(0, pos));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
    }
    return lines;
}

// Shared label normalization for both text formats.
Dataset build(std::size_t dim, Vector features, Vector labels,
              const std::vector<std::size_t>& line_of, const ParseOptions& options) {
    if (labels.empty()) throw DataError("no data rows");
    if (options.regression) {
        return Dataset(dim, Task::regression, 0, std::move(features), std::move(labels));
    }
    bool has_minus_one = false;
    bool has_zero = false;
    double max_label = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = labels[i];
        if (y != std::floor(y)) {
            throw DataError("line " + std::to_string(line_of[i]) + ": label is not an integer");
        }
        has_minus_one |= (y == -1.0);
        has_zero |= (y == 0.0);
        max_label = std::max(max_label, y);
    }
    int k = 0;
    if (options.n_classes) {
        k = *options.n_classes;
        if (k < 2) throw DataError("declared class count must be at least 2");
    } else {
        k = max_label <= 1.0 ? 2 : static_cast<int>(max_label) + 1;
    }
    if (k == 2) {
        if (has_minus_one && has_zero) throw DataError("binary labels mix -1 and 0");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            double& y = labels[i];
            if (y == 0.0) {
                y = -1.0;
            } else if (y != 1.0 && y != -1.0) {
                throw DataError("line " + std::to_string(line_of[i]) + ": label " +
                                format_double(y) + " out of range for 2 classes");
            }
        }
        return Dataset(dim, Task::binary, 2, std::move(features), std::move(labels));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw DataError("line " + std::to_string(line_of[i]) + ": label " +
                            format_double(labels[i]) + " out of range [0, " + std::to_string(k) + ")");
        }
    }
    return Dataset(dim, Task::multiclass, k, std::move(features), std::move(labels));
}

double label_for_output(const Dataset& data, std::size_t i) { return data.labels()[i]; }

}  // namespace

Dataset parse_csv_text(const std::string& text, const ParseOptions& options) {
    const auto lines = split_lines(text);
    std::size_t header_line = 0;
    while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
    if (header_line == lines.size()) throw DataError("empty CSV input");

    const std::string_view header = trim(lines[header_line]);
    if (header.substr(0, 5) != "label") {
        throw DataError("line " + std::to_string(header_line + 1) + ": header must begin with \"label\"");
    }
    const std::size_t columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
    const std::size_t dim = columns - 1;

    Vector features;
    Vector labels;
    std::vector<std::size_t> line_of;
    for (std::size_t ln = header_line + 1; ln < lines.size(); ++ln) {
        std::string_view line = trim(lines[ln]);
        if (line.empty()) continue;
        const std::size_t line_no = ln + 1;
        std::size_t col = 0;
        while (true) {
            const auto comma = line.find(',');
            const std::string_view cell = line.substr(0, comma);
            if (col >= columns) {
                throw DataError("line " + std::to_string(line_no) + ": expected " +
                                std::to_string(columns) + " columns");
            }
            auto value = parse_number(cell);
            if (!value) {
                throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" +
                                std::string(trim(cell)) + "'");
            }
            if (col == 0) {
                labels.push_back(*value);
            } else {
                features.push_back(*value);
            }
            ++col;
            if (comma == std::string_view::npos) break;
            line.remove_prefix(comma + 1);
        }
        if (col != columns) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                            " columns, got " + std::to_string(col));
        }
        line_of.push_back(line_no);
    }
    return build(dim, std::move(features), std::move(labels), line_of, options);
}

Dataset parse_csv(const std::filesystem::path& path, const ParseOptions& options) {
    try {
        return parse_csv_text(read_file(path), options);
    } catch (const DataError& e) {
        const std::string msg = e.what();
        if (msg.find(path.string()) != std::string::npos) throw;
        throw DataError(path.string() + ": " + msg);
    }
}

std::string to_csv_text(const Dataset& data) {
    std::string out = "label";
    for (std::size_t j = 0; j < data.dim(); ++j) out += ",f" + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += format_double(label_for_output(data, i));
        for (double v : data.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    write_file(path, to_csv_text(data));
}

Dataset parse_svmlight_text(const std::string& text, const ParseOptions& options) {
    struct Row {
        double label;
        std::vector<std::pair<std::size_t, double>> entries;
    };
    std::vector<Row> rows;
    std::vector<std::size_t> line_of;
    std::size_t dim = 0;

    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t line_no = ln + 1;

        std::vector<std::string_view> tokens;
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
            if (pos >= line.size()) break;
            std::size_t end = pos;
            while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
            tokens.push_back(line.substr(pos, end - pos));
            pos = end;
        }

        Row row;
        auto label = parse_number(tokens.front());
        if (!label) throw DataError("line " + std::to_string(line_no) + ": bad label");
        row.label = *label;
        std::size_t prev = 0;
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto colon = tokens[t].find(':');
            if (colon == std::string_view::npos) {
                throw DataError("line " + std::to_string(line_no) + ": expected idx:val, got '" +
                                std::string(tokens[t]) + "'");
            }
            const std::string_view idx_text = tokens[t].substr(0, colon);
            std::size_t idx = 0;
            auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
            if (ec != std::errc{} || ptr != idx_text.data() + idx_text.size()) {
                throw DataError("line " + std::to_string(line_no) + ": bad feature index");
            }
            if (idx == 0) throw DataError("line " + std::to_string(line_no) + ": feature index 0 (indices are 1-based)");
            if (idx <= prev) {
                throw DataError("line " + std::to_string(line_no) + ": feature indices must be strictly increasing");
            }
            auto value = parse_number(tokens[t].substr(colon + 1));
            if (!value) throw DataError("line " + std::to_string(line_no) + ": non-numeric feature value");
            row.entries.emplace_back(idx, *value);
            prev = idx;
            dim = std::max(dim, idx);
        }
        rows.push_back(std::move(row));
        line_of.push_back(line_no);
    }
    if (rows.empty()) throw DataError("empty svmlight input");

    Vector features(rows.size() * dim, 0.0);
    Vector labels;
    labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        labels.push_back(rows[i].label);
        for (auto [idx, value] : rows[i].entries) features[i * dim + idx - 1] = value;
    }
    return build(dim, std::move(features), std::move(labels), line_of, options);
}

Dataset parse_svmlight(const std::filesystem::path& path, const ParseOptions& options) {
    try {
        return parse_svmlight_text(read_file(path), options);
    } catch (const DataError& e) {
        const std::string msg = e.what();
        if (msg.find(path.string()) != std::string::npos) throw;
        throw DataError(path.string() + ": " + msg);
    }
}

std::string to_svmlight_text(const Dataset& data) {
    std::string out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += format_double(label_for_output(data, i));
        const auto r = data.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            // The first row always carries the last column so the dimension
            // survives a round trip even when trailing features are zero.
            const bool pin_dim = (i == 0 && j + 1 == r.size());
            if (r[j] == 0.0 && !pin_dim) continue;
            out += ' ';
            out += std::to_string(j + 1);
            out += ':';
            out += format_double(r[j]);
        }
        out += '\n';
    }
    return out;
}

void write_svmlight(const Dataset& data, const std::filesystem::path& path) {
    write_file(path, to_svmlight_text(data));
}

}  // namespace influence
