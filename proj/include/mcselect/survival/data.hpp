#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace mcselect {

enum class CovariateKind { continuous, ordinal, categorical };

inline const char* to_string(CovariateKind k) {
  switch (k) {
    case CovariateKind::continuous: return "continuous";
    case CovariateKind::ordinal: return "ordinal";
    case CovariateKind::categorical: return "categorical";
  }
  return "?";
}

inline CovariateKind covariate_kind_from_string(const std::string& s) {
  if (s == "continuous") return CovariateKind::continuous;
  if (s == "ordinal") return CovariateKind::ordinal;
  if (s == "categorical") return CovariateKind::categorical;
  throw std::invalid_argument("unknown covariate kind '" + s + "'");
}

struct CovariateSchema {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> categories;  // categorical only
};

// Right-censored survival sample over typed covariates. Categorical values
// are stored as the index of the category in the schema's list; numeric
// kinds store the raw value. Rows with missing or malformed values are
// rejected at ingestion with the offending row number.
struct SurvivalDataset {
  std::vector<double> time;
  std::vector<std::uint8_t> event;  // 1 = exact observation, 0 = right censored
  std::vector<CovariateSchema> schema;
  std::vector<std::vector<double>> columns;  // one per covariate, length n
  std::vector<double> log_time;

  std::size_t n() const { return time.size(); }
  std::size_t n_covariates() const { return schema.size(); }

  void validate() const {
    if (time.empty()) throw std::invalid_argument("survival dataset is empty");
    if (event.size() != time.size()) throw std::invalid_argument("time/event length mismatch");
    for (std::size_t i = 0; i < time.size(); ++i) {
      if (!(time[i] > 0.0) || !std::isfinite(time[i]))
        throw std::invalid_argument("survival times must be positive (row " +
                                    std::to_string(i + 1) + ")");
      if (event[i] > 1)
        throw std::invalid_argument("event flags must be 0 or 1 (row " + std::to_string(i + 1) +
                                    ")");
    }
    if (columns.size() != schema.size())
      throw std::invalid_argument("covariate column/schema mismatch");
    for (const auto& col : columns)
      if (col.size() != time.size())
        throw std::invalid_argument("covariate column length mismatch");
  }

  void finalize() {
    validate();
    log_time.resize(time.size());
    for (std::size_t i = 0; i < time.size(); ++i) log_time[i] = std::log(time[i]);
  }
};

// Schema file: {"covariates": [{"name": ..., "kind": ...,
// "categories": [...]}, ...]}. Categories are required for categorical
// covariates so unknown levels can be rejected at ingestion.
inline std::vector<CovariateSchema> read_schema_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file " + path);
  nlohmann::json j;
  in >> j;
  std::vector<CovariateSchema> schema;
  for (const auto& c : j.at("covariates")) {
    CovariateSchema s;
    s.name = c.at("name").get<std::string>();
    s.kind = covariate_kind_from_string(c.at("kind").get<std::string>());
    if (s.kind == CovariateKind::categorical) {
      s.categories = c.at("categories").get<std::vector<std::string>>();
      if (s.categories.size() < 2)
        throw std::runtime_error("categorical covariate '" + s.name +
                                 "' needs at least two categories");
    }
    schema.push_back(std::move(s));
  }
  if (schema.empty()) throw std::runtime_error("schema declares no covariates");
  return schema;
}

inline void write_schema_json(const std::string& path,
                              const std::vector<CovariateSchema>& schema) {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& s : schema) {
    nlohmann::json c = {{"name", s.name}, {"kind", to_string(s.kind)}};
    if (s.kind == CovariateKind::categorical) c["categories"] = s.categories;
    covs.push_back(std::move(c));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << nlohmann::json{{"covariates", covs}}.dump(2) << "\n";
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace detail

// CSV ingestion. Expected header: time,event,<covariate names in schema
// order>. Every malformed cell error carries its 1-based data row number.
inline SurvivalDataset ingest_survival_csv(const std::string& path,
                                           const std::vector<CovariateSchema>& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open survival file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("survival file is empty: " + path);

  const auto header = detail::split_csv_row(line);
  if (header.size() != schema.size() + 2)
    throw std::runtime_error("header has " + std::to_string(header.size()) +
                             " columns, schema expects " + std::to_string(schema.size() + 2));
  if (detail::trim(header[0]) != "time" || detail::trim(header[1]) != "event")
    throw std::runtime_error("header must start with time,event");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (detail::trim(header[j + 2]) != schema[j].name)
      throw std::runtime_error("header column " + std::to_string(j + 3) + " is '" +
                               detail::trim(header[j + 2]) + "', schema expects '" +
                               schema[j].name + "'");

  SurvivalDataset ds;
  ds.schema = schema;
  ds.columns.resize(schema.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_csv_row(line);
    const std::string where = " (row " + std::to_string(row) + ")";
    if (fields.size() != schema.size() + 2)
      throw std::runtime_error("wrong field count" + where);

    const std::string time_field = detail::trim(fields[0]);
    const std::string event_field = detail::trim(fields[1]);
    if (time_field.empty() || event_field.empty())
      throw std::runtime_error("missing value" + where);
    double t;
    try {
      std::size_t used = 0;
      t = std::stod(time_field, &used);
      if (used != time_field.size()) throw std::invalid_argument(time_field);
    } catch (const std::exception&) {
      throw std::runtime_error("malformed time '" + time_field + "'" + where);
    }
    if (!(t > 0.0) || !std::isfinite(t))
      throw std::runtime_error("nonpositive survival time" + where);
    if (event_field != "0" && event_field != "1")
      throw std::runtime_error("event flag must be 0 or 1, got '" + event_field + "'" + where);

    ds.time.push_back(t);
    ds.event.push_back(static_cast<std::uint8_t>(event_field == "1"));

    for (std::size_t j = 0; j < schema.size(); ++j) {
      const std::string cell = detail::trim(fields[j + 2]);
      if (cell.empty()) throw std::runtime_error("missing value in column '" + schema[j].name +
                                                 "'" + where);
      if (schema[j].kind == CovariateKind::categorical) {
        const auto it =
            std::find(schema[j].categories.begin(), schema[j].categories.end(), cell);
        if (it == schema[j].categories.end())
          throw std::runtime_error("unknown category '" + cell + "' in column '" +
                                   schema[j].name + "'" + where);
        ds.columns[j].push_back(
            static_cast<double>(std::distance(schema[j].categories.begin(), it)));
      } else {
        try {
          std::size_t used = 0;
          const double v = std::stod(cell, &used);
          if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
          ds.columns[j].push_back(v);
        } catch (const std::exception&) {
          throw std::runtime_error("malformed numeric '" + cell + "' in column '" +
                                   schema[j].name + "'" + where);
        }
      }
    }
  }
  if (ds.time.empty()) throw std::runtime_error("survival file has no data rows: " + path);
  ds.finalize();
  return ds;
}

}  // namespace mcselect
