#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace metabias {

enum class ModeratorKind { binary, continuous };

std::string to_string(ModeratorKind kind);
ModeratorKind moderator_kind_from_string(const std::string& s);

struct ModeratorSpec {
  std::string name;
  ModeratorKind kind = ModeratorKind::continuous;
};

/// Ordered moderator declarations. Names are unique and may not shadow the
/// reserved columns `estimate_id`, `study_id`, `theta` and `se`.
class ModeratorSchema {
 public:
  ModeratorSchema() = default;
  explicit ModeratorSchema(std::vector<ModeratorSpec> entries);

  const std::vector<ModeratorSpec>& entries() const noexcept { return entries_; }
  std::vector<std::string> names() const;
  std::optional<ModeratorKind> kind_of(const std::string& name) const;
  bool contains(const std::string& name) const { return kind_of(name).has_value(); }
  std::size_t size() const noexcept { return entries_.size(); }

  nlohmann::json to_json() const;
  static ModeratorSchema from_json(const nlohmann::json& j);
  static ModeratorSchema load(const std::filesystem::path& path);

 private:
  std::vector<ModeratorSpec> entries_;
};

struct EffectEstimate {
  std::string estimate_id;
  std::string study_id;
  double theta = 0.0;
  double se = 1.0;
  std::map<std::string, double> moderators;

  double z() const { return theta / se; }
  /// Two-sided normal-reference p-value, 2 (1 - Phi(|theta / se|)).
  double p_value() const;
};

/// Validated, immutable collection of estimates clustered by study.
class MetaDataset {
 public:
  MetaDataset(std::vector<EffectEstimate> estimates, ModeratorSchema schema,
              std::string provenance = {});

  const std::vector<EffectEstimate>& estimates() const noexcept { return estimates_; }
  const ModeratorSchema& schema() const noexcept { return schema_; }
  const std::string& provenance() const noexcept { return provenance_; }

  std::size_t size() const noexcept { return estimates_.size(); }
  std::size_t n_studies() const noexcept { return study_ids_.size(); }
  /// Study ids in order of first appearance.
  const std::vector<std::string>& study_ids() const noexcept { return study_ids_; }
  /// For each estimate, the index of its study in study_ids().
  const std::vector<std::size_t>& study_index() const noexcept { return study_index_; }

  std::vector<double> thetas() const;
  std::vector<double> ses() const;
  /// Values of `theta`, `se`, or a schema moderator, aligned to estimates.
  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  MetaDataset subset(const std::vector<std::size_t>& indices) const;

  /// Throws InsufficientDataError unless there are >= 2 estimates in >= 2 studies.
  void require_poolable() const;

 private:
  std::vector<EffectEstimate> estimates_;
  ModeratorSchema schema_;
  std::string provenance_;
  std::vector<std::string> study_ids_;
  std::vector<std::size_t> study_index_;
};

MetaDataset read_csv(std::istream& in, const ModeratorSchema& schema, std::string provenance = {});
/// Without a schema, every non-reserved column becomes a moderator; columns
/// whose values are all 0/1 are declared binary, the rest continuous.
MetaDataset read_csv(std::istream& in, std::string provenance = {});
MetaDataset load_csv(const std::filesystem::path& path, const ModeratorSchema& schema);
MetaDataset load_csv(const std::filesystem::path& path);

/// Writes estimate_id, study_id, theta, se and schema moderators; numbers use
/// 17 significant digits so a reload reproduces them exactly.
void write_csv(std::ostream& out, const MetaDataset& data);
void save_csv(const std::filesystem::path& path, const MetaDataset& data);

struct OutlierResult {
  MetaDataset retained;
  std::vector<std::string> excluded_ids;
};

/// One screening pass: drops estimates whose theta or se lies more than
/// `iqr_multiple` interquartile ranges from the respective sample median.
OutlierResult filter_outliers(const MetaDataset& data, double iqr_multiple = 10.0);

struct DescriptiveRow {
  std::string name;
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Rows for theta, se, then each moderator in schema order.
std::vector<DescriptiveRow> describe(const MetaDataset& data);
void write_describe_csv(std::ostream& out, const std::vector<DescriptiveRow>& rows);

}  // namespace metabias
