#include "metabias/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "metabias/error.hpp"
#include "metabias/json_io.hpp"
#include "metabias/stats.hpp"

namespace metabias {

namespace {

const std::set<std::string> kReserved = {"estimate_id", "study_id", "theta", "se"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Locale-independent; rejects trailing garbage and non-finite values.
std::optional<double> parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(std::istream& in) {
  RawTable t;
  std::string line;
  bool have_header = false;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
      }
      if (trim(line).empty()) continue;
      for (auto& h : split_csv_line(line)) t.header.push_back(trim(h));
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    ++row_no;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ParseError(row_no, "expected " + std::to_string(t.header.size()) + " cells, found " +
                                   std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw SchemaError("CSV input is empty (no header row)");
  return t;
}

std::size_t column_index(const RawTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw SchemaError("missing required column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

MetaDataset build_dataset(const RawTable& t, const ModeratorSchema& schema, std::string provenance) {
  const std::size_t i_study = column_index(t, "study_id");
  const std::size_t i_theta = column_index(t, "theta");
  const std::size_t i_se = column_index(t, "se");
  std::optional<std::size_t> i_id;
  if (auto it = std::find(t.header.begin(), t.header.end(), "estimate_id"); it != t.header.end()) {
    i_id = static_cast<std::size_t>(it - t.header.begin());
  }
  std::vector<std::pair<std::string, std::size_t>> mod_cols;
  for (const auto& spec : schema.entries()) mod_cols.emplace_back(spec.name, column_index(t, spec.name));

  std::vector<EffectEstimate> estimates;
  estimates.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    const std::size_t row_no = r + 1;
    EffectEstimate e;
    e.estimate_id = i_id ? trim(cells[*i_id]) : std::to_string(row_no);
    e.study_id = trim(cells[i_study]);
    if (e.study_id.empty()) throw ParseError(row_no, "empty study_id");
    const auto numeric = [&](std::size_t col, const std::string& name) {
      auto v = parse_double(cells[col]);
      if (!v) throw ParseError(row_no, "column '" + name + "': non-numeric or non-finite value '" + cells[col] + "'");
      return *v;
    };
    e.theta = numeric(i_theta, "theta");
    e.se = numeric(i_se, "se");
    if (!(e.se > 0.0)) {
      throw ValidationError("row " + std::to_string(row_no) + " (estimate_id " + e.estimate_id +
                            "): se must be > 0, got " + format_number(e.se));
    }
    for (const auto& [name, col] : mod_cols) e.moderators[name] = numeric(col, name);
    estimates.push_back(std::move(e));
  }
  return MetaDataset(std::move(estimates), schema, std::move(provenance));
}

}  // namespace

std::string to_string(ModeratorKind kind) { return kind == ModeratorKind::binary ? "binary" : "continuous"; }

ModeratorKind moderator_kind_from_string(const std::string& s) {
  if (s == "binary") return ModeratorKind::binary;
  if (s == "continuous") return ModeratorKind::continuous;
  throw SchemaError("unknown moderator kind '" + s + "' (expected binary or continuous)");
}

ModeratorSchema::ModeratorSchema(std::vector<ModeratorSpec> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) throw SchemaError("moderator name must not be empty");
    if (kReserved.count(e.name)) throw SchemaError("moderator name '" + e.name + "' is reserved");
    if (!seen.insert(e.name).second) throw SchemaError("duplicate moderator name '" + e.name + "'");
  }
}

std::vector<std::string> ModeratorSchema::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::optional<ModeratorKind> ModeratorSchema::kind_of(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.kind;
  return std::nullopt;
}

nlohmann::json ModeratorSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries_) arr.push_back({{"name", e.name}, {"kind", to_string(e.kind)}});
  return arr;
}

ModeratorSchema ModeratorSchema::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("schema must be a JSON array of {name, kind}");
  std::vector<ModeratorSpec> entries;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("name") || !item.contains("kind"))
      throw SchemaError("schema entries need 'name' and 'kind'");
    entries.push_back({item.at("name").get<std::string>(),
                       moderator_kind_from_string(item.at("kind").get<std::string>())});
  }
  return ModeratorSchema(std::move(entries));
}

ModeratorSchema ModeratorSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("invalid schema JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

double EffectEstimate::p_value() const { return stats::two_sided_p_normal(theta / se); }

MetaDataset::MetaDataset(std::vector<EffectEstimate> estimates, ModeratorSchema schema, std::string provenance)
    : estimates_(std::move(estimates)), schema_(std::move(schema)), provenance_(std::move(provenance)) {
  std::set<std::string> ids;
  std::unordered_map<std::string, std::size_t> study_pos;
  study_index_.reserve(estimates_.size());
  for (const auto& e : estimates_) {
    if (!ids.insert(e.estimate_id).second)
      throw ValidationError("duplicate estimate_id '" + e.estimate_id + "'");
    if (!std::isfinite(e.theta) || !std::isfinite(e.se))
      throw ValidationError("estimate " + e.estimate_id + ": theta and se must be finite");
    if (!(e.se > 0.0)) throw ValidationError("estimate " + e.estimate_id + ": se must be > 0");
    for (const auto& spec : schema_.entries()) {
      const auto it = e.moderators.find(spec.name);
      if (it == e.moderators.end())
        throw ValidationError("estimate " + e.estimate_id + ": missing moderator '" + spec.name + "'");
      if (!std::isfinite(it->second))
        throw ValidationError("estimate " + e.estimate_id + ": moderator '" + spec.name + "' is not finite");
      if (spec.kind == ModeratorKind::binary && it->second != 0.0 && it->second != 1.0)
        throw ValidationError("estimate " + e.estimate_id + ": binary moderator '" + spec.name +
                              "' has value " + format_number(it->second));
    }
    auto [it, inserted] = study_pos.emplace(e.study_id, study_ids_.size());
    if (inserted) study_ids_.push_back(e.study_id);
    study_index_.push_back(it->second);
  }
}

std::vector<double> MetaDataset::thetas() const { return column("theta"); }
std::vector<double> MetaDataset::ses() const { return column("se"); }

bool MetaDataset::has_column(const std::string& name) const {
  return name == "theta" || name == "se" || schema_.contains(name);
}

std::vector<double> MetaDataset::column(const std::string& name) const {
  std::vector<double> out;
  out.reserve(estimates_.size());
  if (name == "theta") {
    for (const auto& e : estimates_) out.push_back(e.theta);
  } else if (name == "se") {
    for (const auto& e : estimates_) out.push_back(e.se);
  } else {
    if (!schema_.contains(name)) throw SchemaError("unknown column '" + name + "'");
    for (const auto& e : estimates_) out.push_back(e.moderators.at(name));
  }
  return out;
}

MetaDataset MetaDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<EffectEstimate> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(estimates_.at(i));
  return MetaDataset(std::move(picked), schema_, provenance_);
}

void MetaDataset::require_poolable() const {
  if (estimates_.size() < 2 || study_ids_.size() < 2) {
    throw InsufficientDataError("need at least 2 estimates from at least 2 studies, have " +
                                std::to_string(estimates_.size()) + " estimates in " +
                                std::to_string(study_ids_.size()) + " studies");
  }
}

MetaDataset read_csv(std::istream& in, const ModeratorSchema& schema, std::string provenance) {
  return build_dataset(read_table(in), schema, std::move(provenance));
}

MetaDataset read_csv(std::istream& in, std::string provenance) {
  const RawTable t = read_table(in);
  std::vector<ModeratorSpec> specs;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const std::string& name = t.header[c];
    if (kReserved.count(name)) continue;
    bool binary = true;
    for (std::size_t r = 0; r < t.rows.size() && binary; ++r) {
      const auto v = parse_double(t.rows[r][c]);
      binary = v && (*v == 0.0 || *v == 1.0);
    }
    specs.push_back({name, binary ? ModeratorKind::binary : ModeratorKind::continuous});
  }
  return build_dataset(t, ModeratorSchema(std::move(specs)), std::move(provenance));
}

MetaDataset load_csv(const std::filesystem::path& path, const ModeratorSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_csv(in, schema, path.string());
}

MetaDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_csv(in, path.string());
}

void write_csv(std::ostream& out, const MetaDataset& data) {
  out << "estimate_id,study_id,theta,se";
  for (const auto& spec : data.schema().entries()) out << ',' << csv_escape(spec.name);
  out << '\n';
  for (const auto& e : data.estimates()) {
    out << csv_escape(e.estimate_id) << ',' << csv_escape(e.study_id) << ',' << format_number(e.theta) << ','
        << format_number(e.se);
    for (const auto& spec : data.schema().entries()) out << ',' << format_number(e.moderators.at(spec.name));
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const MetaDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  write_csv(out, data);
}

OutlierResult filter_outliers(const MetaDataset& data, double iqr_multiple) {
  if (data.size() < 4) {
    throw InsufficientDataError("outlier screening needs at least 4 estimates, have " + std::to_string(data.size()));
  }
  const auto band = [&](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double median = stats::quantile_sorted(xs, 0.5);
    const double iqr = stats::quantile_sorted(xs, 0.75) - stats::quantile_sorted(xs, 0.25);
    return std::pair{median, iqr_multiple * iqr};
  };
  const auto [theta_med, theta_band] = band(data.thetas());
  const auto [se_med, se_band] = band(data.ses());

  std::vector<std::size_t> keep;
  std::vector<std::string> excluded;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& e = data.estimates()[i];
    const bool out = std::abs(e.theta - theta_med) > theta_band || std::abs(e.se - se_med) > se_band;
    if (out) {
      excluded.push_back(e.estimate_id);
    } else {
      keep.push_back(i);
    }
  }
  return {data.subset(keep), std::move(excluded)};
}

std::vector<DescriptiveRow> describe(const MetaDataset& data) {
  std::vector<std::string> names = {"theta", "se"};
  for (const auto& n : data.schema().names()) names.push_back(n);
  std::vector<DescriptiveRow> rows;
  for (const auto& name : names) {
    const auto xs = data.column(name);
    DescriptiveRow row{name, xs.size(), 0.0, 0.0, 0.0, 0.0};
    if (!xs.empty()) {
      row.mean = stats::mean(xs);
      row.sd = stats::sd(xs);
      const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
      row.min = *mn;
      row.max = *mx;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_describe_csv(std::ostream& out, const std::vector<DescriptiveRow>& rows) {
  out << "name,count,mean,sd,min,max\n";
  for (const auto& r : rows) {
    out << csv_escape(r.name) << ',' << r.count << ',' << format_number(r.mean) << ',' << format_number(r.sd) << ','
        << format_number(r.min) << ',' << format_number(r.max) << '\n';
  }
}

}  // namespace metabias
