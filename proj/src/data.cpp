#include "gbmixed/data.hpp"

#include "gbmixed/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace gbmixed {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cell.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

bool parse_int64(const std::string& s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::size_t GroupedDataset::num_observations() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += static_cast<std::size_t>(g.size());
  return n;
}

std::optional<Eigen::Index> GroupedDataset::feature_index(const std::string& name) const {
  for (std::size_t j = 0; j < feature_names.size(); ++j)
    if (feature_names[j] == name) return static_cast<Eigen::Index>(j);
  return std::nullopt;
}

void GroupedDataset::validate() const {
  const Eigen::Index p = num_features();
  std::vector<std::string> ids;
  ids.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.size() < 1) throw DataError("group '" + g.id + "' has no observations");
    if (g.X.rows() != g.size() || g.X.cols() != p)
      throw ShapeError("group '" + g.id + "' X has wrong shape");
    if (g.Z.rows() != g.size() || g.Z.cols() != q)
      throw ShapeError("group '" + g.id + "' Z has wrong shape");
    if (!g.y.allFinite() || !g.X.allFinite() || !g.Z.allFinite())
      throw DataError("group '" + g.id + "' contains non-finite values");
    ids.push_back(g.id);
  }
  const bool numeric = all_integer_ids(ids);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (!group_id_less(ids[i - 1], ids[i], numeric))
      throw DataError("group ids not unique or not in canonical order at '" + ids[i] + "'");
  }
}

Eigen::MatrixXd GroupedDataset::stacked_X() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(num_observations()), num_features());
  Eigen::Index row = 0;
  for (const auto& g : groups) {
    out.middleRows(row, g.size()) = g.X;
    row += g.size();
  }
  return out;
}

Eigen::VectorXd GroupedDataset::stacked_y() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(num_observations()));
  Eigen::Index row = 0;
  for (const auto& g : groups) {
    out.segment(row, g.size()) = g.y;
    row += g.size();
  }
  return out;
}

Eigen::MatrixXd GroupedDataset::stacked_x_tilde() const {
  if (groups.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(groups.size()), groups.front().x_tilde.size());
  for (std::size_t i = 0; i < groups.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = groups[i].x_tilde;
  return out;
}

bool all_integer_ids(const std::vector<std::string>& ids) {
  long long v = 0;
  return std::all_of(ids.begin(), ids.end(), [&](const std::string& s) { return parse_int64(s, v); });
}

bool group_id_less(const std::string& a, const std::string& b, bool numeric) {
  if (numeric) {
    long long x = 0, y = 0;
    parse_int64(a, x);
    parse_int64(b, y);
    return x < y;
  }
  return a < b;
}

void canonicalize(GroupedDataset& dataset) {
  std::vector<std::string> ids;
  for (const auto& g : dataset.groups) ids.push_back(g.id);
  const bool numeric = all_integer_ids(ids);
  std::stable_sort(dataset.groups.begin(), dataset.groups.end(),
                   [numeric](const GroupBlock& a, const GroupBlock& b) {
                     return group_id_less(a.id, b.id, numeric);
                   });
}

GroupedDataset load_csv(const std::string& path, const ColumnSchema& schema, ResponsePolicy response) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // Tolerate a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col.emplace(header[k], k);

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };

  // Collect every missing column so that the message lists them all.
  {
    std::vector<std::string> missing;
    auto check = [&](const std::string& name) {
      if (!col.count(name)) missing.push_back(name);
    };
    check(schema.group_column);
    if (response == ResponsePolicy::kRequired) check(schema.response_column);
    for (const auto& f : schema.feature_columns) check(f);
    for (const auto& z : schema.z_columns) check(z);
    if (!missing.empty()) {
      std::string msg = "missing column(s):";
      for (const auto& m : missing) msg += " '" + m + "'";
      throw SchemaError(msg);
    }
  }

  const std::size_t group_col = require(schema.group_column);
  std::optional<std::size_t> y_col;
  if (col.count(schema.response_column)) y_col = col.at(schema.response_column);
  std::vector<std::size_t> x_cols, z_cols;
  for (const auto& f : schema.feature_columns) x_cols.push_back(require(f));
  for (const auto& z : schema.z_columns) z_cols.push_back(require(z));

  GroupedDataset ds;
  ds.feature_names = schema.feature_columns;
  ds.q = schema.intercept_only() ? 1 : static_cast<Eigen::Index>(schema.z_columns.size());
  ds.z_names = schema.intercept_only() ? std::vector<std::string>{"(intercept)"} : schema.z_columns;
  ds.categorical.assign(schema.feature_columns.size(), false);
  for (const auto& c : schema.categorical_columns) {
    auto it = std::find(schema.feature_columns.begin(), schema.feature_columns.end(), c);
    if (it == schema.feature_columns.end())
      throw SchemaError("categorical column '" + c + "' is not a feature column");
    ds.categorical[static_cast<std::size_t>(it - schema.feature_columns.begin())] = true;
  }
  if (schema.treatment_column) {
    auto it = std::find(schema.feature_columns.begin(), schema.feature_columns.end(), *schema.treatment_column);
    if (it == schema.feature_columns.end())
      throw SchemaError("treatment column '" + *schema.treatment_column + "' is not a feature column");
    ds.treatment_column = static_cast<Eigen::Index>(it - schema.feature_columns.begin());
  }

  struct Rows {
    std::vector<double> y, x, z;
    std::size_t n = 0;
  };
  std::map<std::string, Rows> by_group;
  std::vector<std::string> order;

  const std::size_t p = x_cols.size();
  const std::size_t q = static_cast<std::size_t>(ds.q);
  std::size_t row_number = 1;  // header is row 1
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row_number) + ": expected " + std::to_string(header.size()) +
                       " cells, found " + std::to_string(cells.size()));
    auto numeric = [&](std::size_t c) {
      double v = 0.0;
      if (!parse_double(cells[c], v))
        throw ParseError("row " + std::to_string(row_number) + ", column '" + header[c] +
                         "': non-numeric or missing value '" + cells[c] + "'");
      return v;
    };
    std::string gid = trim(cells[group_col]);
    if (gid.empty()) throw ParseError("row " + std::to_string(row_number) + ": empty group id");
    auto [it, inserted] = by_group.try_emplace(gid);
    if (inserted) order.push_back(gid);
    Rows& r = it->second;
    r.y.push_back(y_col ? numeric(*y_col) : 0.0);
    for (auto c : x_cols) r.x.push_back(numeric(c));
    if (schema.intercept_only()) {
      r.z.push_back(1.0);
    } else {
      for (auto c : z_cols) r.z.push_back(numeric(c));
    }
    ++r.n;
    ++data_rows;
  }
  if (data_rows == 0) throw DataError("empty data in '" + path + "'");

  for (const auto& gid : order) {
    Rows& r = by_group.at(gid);
    GroupBlock g;
    g.id = gid;
    const auto n = static_cast<Eigen::Index>(r.n);
    g.y = Eigen::Map<Eigen::VectorXd>(r.y.data(), n);
    g.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        r.x.data(), n, static_cast<Eigen::Index>(p));
    g.Z = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        r.z.data(), n, static_cast<Eigen::Index>(q));
    ds.groups.push_back(std::move(g));
  }
  canonicalize(ds);
  AggregationRule rule{ds.categorical};
  ds = group_summaries(ds, rule);
  ds.validate();
  return ds;
}

void write_csv(const GroupedDataset& dataset, const std::string& path, const std::string& group_column,
               const std::string& response_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const bool intercept_only = dataset.z_names.size() == 1 && dataset.z_names.front() == "(intercept)";
  out << group_column << ',' << response_column;
  for (const auto& f : dataset.feature_names) out << ',' << f;
  if (!intercept_only)
    for (const auto& z : dataset.z_names) out << ',' << z;
  out << '\n';
  for (const auto& g : dataset.groups) {
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      out << g.id << ',' << format_double(g.y(j));
      for (Eigen::Index k = 0; k < g.X.cols(); ++k) out << ',' << format_double(g.X(j, k));
      if (!intercept_only)
        for (Eigen::Index k = 0; k < g.Z.cols(); ++k) out << ',' << format_double(g.Z(j, k));
      out << '\n';
    }
  }
}

Eigen::VectorXd summarize_rows(const Eigen::MatrixXd& X, const AggregationRule& rule) {
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const bool cat = static_cast<std::size_t>(k) < rule.categorical.size() &&
                     rule.categorical[static_cast<std::size_t>(k)];
    if (!cat) {
      out(k) = X.col(k).mean();
      continue;
    }
    // Mode; std::map iterates ascending so the first maximal count is the smallest value.
    std::map<double, int> counts;
    for (Eigen::Index j = 0; j < X.rows(); ++j) ++counts[X(j, k)];
    double best = counts.begin()->first;
    int best_count = 0;
    for (const auto& [value, count] : counts) {
      if (count > best_count) {
        best = value;
        best_count = count;
      }
    }
    out(k) = best;
  }
  return out;
}

GroupedDataset group_summaries(const GroupedDataset& dataset, const AggregationRule& rule) {
  GroupedDataset out = dataset;
  for (auto& g : out.groups) g.x_tilde = summarize_rows(g.X, rule);
  return out;
}

GroupedDataset empty_like(const GroupedDataset& like) {
  GroupedDataset out;
  out.feature_names = like.feature_names;
  out.z_names = like.z_names;
  out.categorical = like.categorical;
  out.treatment_column = like.treatment_column;
  out.q = like.q;
  return out;
}

std::pair<GroupedDataset, GroupedDataset> split_by_groups(const GroupedDataset& dataset, double train_fraction,
                                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  const std::size_t C = dataset.num_groups();
  if (C < 2) throw DataError("cannot split a dataset with fewer than 2 groups");
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(C)));
  if (n_train == 0 || n_train == C)
    throw DataError("cannot split " + std::to_string(C) + " groups with fraction " + format_double(train_fraction));

  std::vector<std::size_t> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<bool> in_train(C, false);
  for (std::size_t k = 0; k < n_train; ++k) in_train[perm[k]] = true;

  GroupedDataset train = empty_like(dataset), eval = empty_like(dataset);
  for (std::size_t i = 0; i < C; ++i) (in_train[i] ? train : eval).groups.push_back(dataset.groups[i]);
  return {std::move(train), std::move(eval)};
}

}  // namespace gbmixed
