#include "gbmixed/model_io.hpp"

#include "gbmixed/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace gbmixed {

std::string escape_token(const std::string& s) {
  if (s.empty()) return "%%";
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c == '%' || c <= ' ' || c == 0x7f) {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xf];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string unescape_token(const std::string& s) {
  if (s == "%%") return "";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) throw ParseError("truncated escape in '" + s + "'");
    unsigned v = 0;
    const auto r = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
    if (r.ec != std::errc() || r.ptr != s.data() + i + 3) throw ParseError("bad escape in '" + s + "'");
    out += static_cast<char>(v);
    i += 2;
  }
  return out;
}

namespace {

void write_spec(std::ostream& out, const char* name, const LearnerSpec& s) {
  out << "config " << name << ' ' << to_string(s.kind) << ' ' << s.tree_max_depth << ' ' << s.tree_min_parent << ' '
      << s.tree_min_child << ' ' << format_double(s.ridge_epsilon) << '\n';
}

void write_learner(std::ostream& out, const FittedLearner& h) {
  out << "learner " << to_string(h.kind()) << ' ' << h.num_features();
  switch (h.kind()) {
    case LearnerKind::kConstant: out << ' ' << format_double(h.constant_value()); break;
    case LearnerKind::kLinear:
      out << ' ' << format_double(h.intercept()) << ' ' << h.features().size();
      for (std::size_t k = 0; k < h.features().size(); ++k) {
        out << ' ' << h.features()[k] << ' ' << format_double(h.coefficients()(static_cast<Eigen::Index>(k)));
      }
      break;
    case LearnerKind::kTree:
      out << ' ' << h.nodes().size();
      for (const auto& n : h.nodes()) {
        out << ' ' << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
            << format_double(n.value);
      }
      break;
  }
  out << '\n';
}

void write_ensemble(std::ostream& out, const std::string& name, const Ensemble& e) {
  out << "ensemble " << name << ' ' << format_double(e.initial) << ' ' << format_double(e.rate) << ' '
      << e.learners.size() << '\n';
  for (const auto& h : e.learners) write_learner(out, h);
}

}  // namespace

void save_model(const FittedModel& m, std::ostream& out) {
  const FitConfig& c = m.config;
  out << "gbmixed-model " << kModelFormatVersion << '\n';
  out << "config variant " << to_string(c.variant) << '\n';
  out << "config max_iterations " << c.max_iterations << '\n';
  out << "config nu_mu " << format_double(c.nu_mu) << '\n';
  out << "config nu_G " << format_double(c.nu_G) << '\n';
  out << "config nu_R " << format_double(c.nu_R) << '\n';
  out << "config group_fraction " << format_double(c.group_fraction) << '\n';
  out << "config feature_fraction " << format_double(c.feature_fraction) << '\n';
  out << "config lookback " << c.lookback << '\n';
  out << "config tolerance " << format_double(c.tolerance) << '\n';
  out << "config early_stopping " << (c.early_stopping ? 1 : 0) << '\n';
  out << "config eval_fraction " << format_double(c.eval_fraction) << '\n';
  out << "config seed " << c.seed << '\n';
  out << "config boost_variance " << (c.boost_variance ? 1 : 0) << '\n';
  out << "config force_include " << c.force_include_features.size();
  for (auto f : c.force_include_features) out << ' ' << f;
  out << '\n';
  write_spec(out, "mean_learner", c.mean_learner);
  write_spec(out, "G_learner", c.G_learner);
  write_spec(out, "R_learner", c.R_learner);

  out << "schema q " << m.q << '\n';
  out << "schema group_column " << escape_token(m.group_column) << '\n';
  out << "schema response_column " << escape_token(m.response_column) << '\n';
  out << "schema treatment ";
  if (m.treatment_column) out << *m.treatment_column; else out << "none";
  out << '\n';
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
    const bool cat = j < m.categorical.size() && m.categorical[j];
    out << "feature " << escape_token(m.feature_names[j]) << ' ' << (cat ? 1 : 0) << '\n';
  }
  for (const auto& z : m.z_names) out << "z " << escape_token(z) << '\n';

  out << "history " << m.history.size();
  for (double h : m.history) out << ' ' << format_double(h);
  out << '\n';
  out << "best_iteration " << m.best_iteration << '\n';
  out << "iterations_run " << m.iterations_run << '\n';

  write_ensemble(out, "mean", m.mean);
  for (std::size_t e = 0; e < m.L_entries.size(); ++e) write_ensemble(out, "L" + std::to_string(e), m.L_entries[e]);
  write_ensemble(out, "logR", m.log_R);

  for (const auto& g : m.group_effects) {
    out << "group " << escape_token(g.id) << ' ' << g.x_tilde.size();
    for (Eigen::Index k = 0; k < g.x_tilde.size(); ++k) out << ' ' << format_double(g.x_tilde(k));
    out << ' ' << g.u_hat.size();
    for (Eigen::Index k = 0; k < g.u_hat.size(); ++k) out << ' ' << format_double(g.u_hat(k));
    out << '\n';
  }
  out << "end\n";
}

std::string serialize_model(const FittedModel& model) {
  std::ostringstream os;
  save_model(model, os);
  return os.str();
}

void save_model(const FittedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save_model(model, out);
  if (!out) throw DataError("failed writing model to '" + path + "'");
}

namespace {

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      tokens_.clear();
      pos_ = 0;
      std::istringstream ss(line);
      std::string t;
      while (ss >> t) tokens_.push_back(t);
      return true;
    }
    return false;
  }

  const std::string& tag() const { return tokens_.front(); }
  bool done() const { return pos_ >= tokens_.size(); }

  std::string word() {
    if (pos_ >= tokens_.size()) fail("unexpected end of record");
    return tokens_[pos_++];
  }
  double real() {
    const std::string t = word();
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail("bad number '" + t + "'");
    return v;
  }
  template <typename Int>
  Int integer() {
    const std::string t = word();
    Int v{};
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail("bad integer '" + t + "'");
    return v;
  }
  void end_record() {
    if (!done()) fail("trailing tokens");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("model file line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

LearnerSpec read_spec(Reader& r) {
  LearnerSpec s;
  s.kind = parse_learner_kind(r.word());
  s.tree_max_depth = r.integer<int>();
  s.tree_min_parent = r.integer<int>();
  s.tree_min_child = r.integer<int>();
  s.ridge_epsilon = r.real();
  return s;
}

FittedLearner read_learner(Reader& r) {
  if (!r.next_line() || r.word() != "learner") r.fail("expected learner record");
  const LearnerKind kind = parse_learner_kind(r.word());
  const auto p = r.integer<Eigen::Index>();
  FittedLearner h;
  switch (kind) {
    case LearnerKind::kConstant: h = FittedLearner::constant(r.real(), p); break;
    case LearnerKind::kLinear: {
      const double intercept = r.real();
      const auto k = r.integer<std::size_t>();
      std::vector<Eigen::Index> features(k);
      Eigen::VectorXd coef(static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < k; ++i) {
        features[i] = r.integer<Eigen::Index>();
        coef(static_cast<Eigen::Index>(i)) = r.real();
      }
      h = FittedLearner::linear(intercept, std::move(features), std::move(coef), p);
      break;
    }
    case LearnerKind::kTree: {
      const auto k = r.integer<std::size_t>();
      std::vector<TreeNode> nodes(k);
      for (auto& n : nodes) {
        n.feature = r.integer<int>();
        n.threshold = r.real();
        n.left = r.integer<int>();
        n.right = r.integer<int>();
        n.value = r.real();
        const auto size = static_cast<int>(k);
        if (!n.is_leaf() && (n.left < 0 || n.left >= size || n.right < 0 || n.right >= size || n.feature >= p)) {
          r.fail("tree node out of range");
        }
      }
      if (nodes.empty()) r.fail("tree without nodes");
      h = FittedLearner::tree(std::move(nodes), p);
      break;
    }
  }
  r.end_record();
  return h;
}

Ensemble read_ensemble_body(Reader& r) {
  Ensemble e;
  e.initial = r.real();
  e.rate = r.real();
  const auto count = r.integer<std::size_t>();
  r.end_record();
  e.learners.reserve(count);
  for (std::size_t k = 0; k < count; ++k) e.learners.push_back(read_learner(r));
  return e;
}

}  // namespace

FittedModel load_model(std::istream& in) {
  Reader r(in);
  if (!r.next_line() || r.word() != "gbmixed-model") r.fail("not a model file");
  const int version = r.integer<int>();
  if (version != kModelFormatVersion) {
    throw ParseError("unsupported model version " + std::to_string(version) + " (this build reads version " +
                     std::to_string(kModelFormatVersion) + ")");
  }
  FittedModel m;
  FitConfig& c = m.config;
  bool ended = false;
  bool have_mean = false;
  bool have_logR = false;
  std::vector<std::pair<std::size_t, Ensemble>> L;
  while (r.next_line()) {
    const std::string tag = r.word();
    if (tag == "end") {
      r.end_record();
      ended = true;
      break;
    }
    if (tag == "config") {
      const std::string key = r.word();
      if (key == "variant") c.variant = parse_variant(r.word());
      else if (key == "max_iterations") c.max_iterations = r.integer<int>();
      else if (key == "nu_mu") c.nu_mu = r.real();
      else if (key == "nu_G") c.nu_G = r.real();
      else if (key == "nu_R") c.nu_R = r.real();
      else if (key == "group_fraction") c.group_fraction = r.real();
      else if (key == "feature_fraction") c.feature_fraction = r.real();
      else if (key == "lookback") c.lookback = r.integer<int>();
      else if (key == "tolerance") c.tolerance = r.real();
      else if (key == "early_stopping") c.early_stopping = r.integer<int>() != 0;
      else if (key == "eval_fraction") c.eval_fraction = r.real();
      else if (key == "seed") c.seed = r.integer<std::uint64_t>();
      else if (key == "boost_variance") c.boost_variance = r.integer<int>() != 0;
      else if (key == "force_include") {
        const auto k = r.integer<std::size_t>();
        c.force_include_features.clear();
        for (std::size_t i = 0; i < k; ++i) c.force_include_features.push_back(r.integer<Eigen::Index>());
      } else if (key == "mean_learner") c.mean_learner = read_spec(r);
      else if (key == "G_learner") c.G_learner = read_spec(r);
      else if (key == "R_learner") c.R_learner = read_spec(r);
      else r.fail("unknown config key '" + key + "'");
    } else if (tag == "schema") {
      const std::string key = r.word();
      if (key == "q") m.q = r.integer<Eigen::Index>();
      else if (key == "group_column") m.group_column = unescape_token(r.word());
      else if (key == "response_column") m.response_column = unescape_token(r.word());
      else if (key == "treatment") {
        const std::string t = r.word();
        if (t == "none") {
          m.treatment_column.reset();
        } else {
          Eigen::Index v = 0;
          const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
          if (res.ec != std::errc() || res.ptr != t.data() + t.size()) r.fail("bad treatment column");
          m.treatment_column = v;
        }
      } else r.fail("unknown schema key '" + key + "'");
    } else if (tag == "feature") {
      m.feature_names.push_back(unescape_token(r.word()));
      m.categorical.push_back(r.integer<int>() != 0);
    } else if (tag == "z") {
      m.z_names.push_back(unescape_token(r.word()));
    } else if (tag == "history") {
      const auto n = r.integer<std::size_t>();
      m.history.clear();
      for (std::size_t i = 0; i < n; ++i) m.history.push_back(r.real());
    } else if (tag == "best_iteration") {
      m.best_iteration = r.integer<int>();
    } else if (tag == "iterations_run") {
      m.iterations_run = r.integer<int>();
    } else if (tag == "ensemble") {
      const std::string name = r.word();
      if (name == "mean") {
        m.mean = read_ensemble_body(r);
        have_mean = true;
        continue;
      }
      if (name == "logR") {
        m.log_R = read_ensemble_body(r);
        have_logR = true;
        continue;
      }
      if (name.size() < 2 || name[0] != 'L') r.fail("unknown ensemble '" + name + "'");
      std::size_t e = 0;
      const auto res = std::from_chars(name.data() + 1, name.data() + name.size(), e);
      if (res.ec != std::errc() || res.ptr != name.data() + name.size()) r.fail("bad ensemble name '" + name + "'");
      L.emplace_back(e, read_ensemble_body(r));
      continue;
    } else if (tag == "group") {
      GroupEffect g;
      g.id = unescape_token(r.word());
      const auto nx = r.integer<Eigen::Index>();
      g.x_tilde.resize(nx);
      for (Eigen::Index k = 0; k < nx; ++k) g.x_tilde(k) = r.real();
      const auto nu = r.integer<Eigen::Index>();
      g.u_hat.resize(nu);
      for (Eigen::Index k = 0; k < nu; ++k) g.u_hat(k) = r.real();
      m.group_effects.push_back(std::move(g));
    } else {
      r.fail("unknown record '" + tag + "'");
    }
    r.end_record();
  }
  if (!ended) throw ParseError("model file is truncated (missing end record)");
  if (!have_mean || !have_logR) throw ParseError("model file lacks mean or logR ensemble");
  if (m.q < 1 || L.size() != static_cast<std::size_t>(lower_entry_count(m.q))) {
    throw ParseError("model file has " + std::to_string(L.size()) + " L ensembles for q = " + std::to_string(m.q));
  }
  m.L_entries.resize(L.size());
  std::vector<bool> seen(L.size(), false);
  for (auto& [e, ens] : L) {
    if (e >= L.size() || seen[e]) throw ParseError("duplicate or out-of-range L ensemble index");
    seen[e] = true;
    m.L_entries[e] = std::move(ens);
  }
  c.validate();
  return m;
}

FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return load_model(in);
}

}  // namespace gbmixed
