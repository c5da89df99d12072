#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cerf/apps.hpp"
#include "cerf/cvem.hpp"
#include "cerf/features.hpp"

namespace cerf::io {

// ---------------------------------------------------------------------------
// Tabular input

/// Rows of reals plus the raw integer labels as written in the file.
struct LabeledTable {
    Matrix X;
    std::vector<long long> labels;  // empty when the table is unlabeled
};

/// Comma-separated reals, no header. With `has_label` the last column is an
/// integer label.
LabeledTable parse_dense_csv(const std::string& text, bool has_label);
LabeledTable load_dense_csv(const std::string& path, bool has_label);

/// "label idx:val ..." lines with 1-based, strictly increasing indices <= dim.
LabeledTable parse_libsvm(const std::string& text, Eigen::Index dim);
LabeledTable load_libsvm(const std::string& path, Eigen::Index dim);

/// Dataset with labels renumbered 0.. in increasing order of raw value.
apps::Dataset to_dataset(const LabeledTable& table);

/// Writes rows with 17 significant digits; labels (if any) as a last column.
std::string format_dense_csv(const Matrix& X, const std::vector<int>& labels = {});

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// ---------------------------------------------------------------------------
// Configuration

enum class ValueType { integer, unsigned_integer, real, boolean, text, real_list, integer_list };

struct KeySpec {
    std::string name;  // "section.key"
    ValueType type;
    std::string fallback;
    std::string help;
};

using Schema = std::vector<KeySpec>;

/// Raw "[section]" / "key = value" entries. Lines starting with '#' or ';'
/// are comments.
class ConfigText {
public:
    static ConfigText parse(const std::string& text, const std::string& origin = "config");

    /// Adds or replaces a value; later calls win.
    void set(const std::string& name, const std::string& value, const std::string& where = "flag");
    const std::map<std::string, std::pair<std::string, std::string>>& entries() const { return entries_; }
    /// Removes and returns every entry of `section`.
    std::map<std::string, std::string> take_section(const std::string& section);

private:
    std::map<std::string, std::pair<std::string, std::string>> entries_;  // name -> (value, where)
};

/// Values checked against a schema. Every schema key is present; unknown
/// keys are rejected when resolving.
class Settings {
public:
    static Settings resolve(const Schema& schema, const ConfigText& text);

    long long integer(const std::string& name) const;
    std::uint64_t unsigned_integer(const std::string& name) const;
    double real(const std::string& name) const;
    bool flag(const std::string& name) const;
    const std::string& text(const std::string& name) const;
    std::vector<double> reals(const std::string& name) const;
    std::vector<long long> integers(const std::string& name) const;

    /// Canonical config file: sections and keys in sorted order.
    std::string canonical() const;
    /// 64-bit FNV-1a of canonical().
    std::uint64_t hash() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, ValueType> types_;
    const std::string& raw(const std::string& name, ValueType type) const;
};

std::uint64_t fnv1a64(const std::string& bytes);

// ---------------------------------------------------------------------------
// Embedding archives

inline constexpr const char* kArchiveFormat = "cerf-archive/1";

/// An embedding, optionally with the linear head of a trained CERF:
/// features(x) = c * W(:, z) * psi_z(x) where z is the embedding's selector.
struct Archive {
    Embedding embedding;
    std::optional<KernelSpec> kernel;
    std::map<std::string, std::uint64_t> seeds;
    bool trained = false;
    Matrix W;
    double c = 1.0;
    cvem::Diagnostics diagnostics;

    void validate() const;
    Eigen::Index input_dim() const { return embedding.input_dim(); }
    Eigen::Index output_dim() const;
    Matrix features(const Matrix& X) const;
    std::uint64_t mac() const { return mac_cost(embedding); }
};

Archive archive_from_trained(const cvem::TrainedCerf& trained);
std::string archive_to_json(const Archive& archive);
Archive archive_from_json(const std::string& text);
void save_archive(const std::string& path, const Archive& archive);
Archive load_archive(const std::string& path);

// ---------------------------------------------------------------------------
// Command line

/// Entry point shared by the `cerf` binary and the tests. Returns the exit
/// status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Names of the subcommands and their schemas, for documentation and tests.
const std::map<std::string, Schema>& command_schemas();

std::string version();

}  // namespace cerf::io
