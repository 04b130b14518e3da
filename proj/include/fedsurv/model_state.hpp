#pragma once

// Versioned text interchange format for model states exchanged between
// clients and the orchestrator. Doubles are written in shortest round-trip
// form, so decode(encode(m)) reproduces every parameter bit for bit.
//
//   fedsurv-model 1
//   family cox|neural|forest
//   ... family body ...
//   end

#include <charconv>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedsurv/cox.hpp"
#include "fedsurv/data.hpp"
#include "fedsurv/forest.hpp"
#include "fedsurv/neural.hpp"

namespace fedsurv {

using ModelState = std::variant<CoxModel, NeuralRiskModel, SurvivalForest>;

inline constexpr int kModelStateVersion = 1;

class ModelStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class StateWriter {
 public:
  StateWriter& word(std::string_view w) {
    sep();
    out_ << w;
    return *this;
  }
  StateWriter& num(double v) { return word(format_double(v)); }
  StateWriter& count(std::uint64_t v) { return word(std::to_string(v)); }
  StateWriter& nums(std::span<const double> v) {
    count(v.size());
    for (double x : v) num(x);
    return *this;
  }
  StateWriter& text(std::string_view s) {
    // percent-escape so the token has no whitespace
    std::string e = "'";
    for (char c : s) {
      if (c == '%' || c == ' ' || c == '\n' || c == '\t' || c == '\r') {
        static constexpr char hex[] = "0123456789ABCDEF";
        e += '%';
        e += hex[(static_cast<unsigned char>(c) >> 4) & 0xF];
        e += hex[static_cast<unsigned char>(c) & 0xF];
      } else {
        e += c;
      }
    }
    return word(e);
  }
  StateWriter& line() {
    out_ << '\n';
    fresh_ = true;
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  void sep() {
    if (!fresh_) out_ << ' ';
    fresh_ = false;
  }
  std::ostringstream out_;
  bool fresh_ = true;
};

class StateReader {
 public:
  explicit StateReader(std::string_view s) : in_(std::string(s)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ModelStateError("model state: unexpected end of input");
    return w;
  }
  void expect(std::string_view w) {
    const auto got = word();
    if (got != w) throw ModelStateError("model state: expected '" + std::string(w) + "', got '" + got + "'");
  }
  double num() {
    const auto w = word();
    double v = 0.0;
    if (!parse_double(w, v)) throw ModelStateError("model state: bad number '" + w + "'");
    return v;
  }
  std::uint64_t count() {
    const auto w = word();
    std::uint64_t v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      throw ModelStateError("model state: bad count '" + w + "'");
    }
    return v;
  }
  std::vector<double> nums() {
    const auto n = count();
    std::vector<double> v;
    v.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(num());
    return v;
  }
  std::string text() {
    const auto w = word();
    if (w.empty() || w.front() != '\'') throw ModelStateError("model state: bad text token");
    std::string out;
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i] == '%' && i + 2 < w.size()) {
        out += static_cast<char>(std::stoi(w.substr(i + 1, 2), nullptr, 16));
        i += 2;
      } else {
        out += w[i];
      }
    }
    return out;
  }

 private:
  std::istringstream in_;
};

inline void write_standardization(StateWriter& w, const Standardization& s) {
  w.word("means").nums(s.means).line();
  w.word("scales").nums(s.scales).line();
}

inline Standardization read_standardization(StateReader& r) {
  Standardization s;
  r.expect("means");
  s.means = r.nums();
  r.expect("scales");
  s.scales = r.nums();
  s.validate();
  return s;
}

inline void write_curve(StateWriter& w, const CumulativeHazardCurve& c) {
  w.nums(c.times()).nums(c.values());
}

inline CumulativeHazardCurve read_curve(StateReader& r) {
  auto t = r.nums();
  auto v = r.nums();
  try {
    return CumulativeHazardCurve(std::move(t), std::move(v));
  } catch (const std::invalid_argument& e) {
    throw ModelStateError(std::string("model state: ") + e.what());
  }
}

inline void write_tree(StateWriter& w, const SurvivalTree& tree) {
  w.word("tree").count(tree.bootstrap_seed).text(tree.client_tag);
  if (tree.importance) {
    w.num(*tree.importance);
  } else {
    w.word("-");
  }
  w.count(tree.nodes.size()).line();
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) {
      w.word("leaf");
      write_curve(w, n.curve);
    } else {
      w.word("split").count(static_cast<std::uint64_t>(n.feature)).num(n.threshold).count(n.left).count(n.right);
    }
    w.line();
  }
}

inline SurvivalTree read_tree(StateReader& r, std::size_t dimension) {
  SurvivalTree tree;
  r.expect("tree");
  tree.bootstrap_seed = r.count();
  tree.client_tag = r.text();
  const auto imp = r.word();
  if (imp != "-") {
    double v = 0.0;
    if (!parse_double(imp, v)) throw ModelStateError("model state: bad importance");
    tree.importance = v;
  }
  const auto n = r.count();
  tree.nodes.resize(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    auto& node = tree.nodes[k];
    const auto kind = r.word();
    if (kind == "leaf") {
      node.curve = read_curve(r);
    } else if (kind == "split") {
      const auto f = r.count();
      if (f >= dimension) throw ModelStateError("model state: split feature out of range");
      node.feature = static_cast<int>(f);
      node.threshold = r.num();
      node.left = static_cast<std::uint32_t>(r.count());
      node.right = static_cast<std::uint32_t>(r.count());
      if (node.left >= n || node.right >= n || node.left <= k || node.right <= k) {
        throw ModelStateError("model state: bad child index");
      }
    } else {
      throw ModelStateError("model state: unknown node kind '" + kind + "'");
    }
  }
  return tree;
}

}  // namespace detail

inline std::string encode_model_state(const ModelState& state) {
  detail::StateWriter w;
  w.word("fedsurv-model").count(kModelStateVersion).line();
  if (const auto* cox = std::get_if<CoxModel>(&state)) {
    w.word("family").word("cox").line();
    w.word("dimension").count(cox->beta.size()).line();
    detail::write_standardization(w, cox->standardization);
    w.word("beta").nums(cox->beta).line();
    w.word("baseline");
    detail::write_curve(w, cox->baseline);
    w.line();
    w.word("fit").count(cox->converged ? 1 : 0).count(static_cast<std::uint64_t>(cox->iterations)).num(cox->loss).line();
  } else if (const auto* nn = std::get_if<NeuralRiskModel>(&state)) {
    w.word("family").word("neural").line();
    w.word("variant").word(to_string(nn->variant)).line();
    w.word("dimension").count(nn->input_dim()).line();
    detail::write_standardization(w, nn->input);
    w.word("layers").count(nn->layers.size()).line();
    for (const auto& L : nn->layers) {
      w.word("layer").count(L.inputs()).count(L.outputs())
          .word(L.activation == Activation::relu ? "relu" : "linear")
          .count(L.batch_norm ? 1 : 0).num(L.dropout).line();
    }
    w.word("parameters").nums(flatten_parameters(*nn)).line();
    w.word("norm_stats").nums(flatten_norm_stats(*nn)).line();
  } else {
    const auto& forest = std::get<SurvivalForest>(state);
    w.word("family").word("forest").line();
    w.word("dimension").count(forest.dimension).line();
    w.word("grid").nums(forest.grid).line();
    w.word("trees").count(forest.trees.size()).line();
    for (const auto& t : forest.trees) detail::write_tree(w, t);
  }
  w.word("end").line();
  return w.str();
}

inline ModelState decode_model_state(std::string_view blob) {
  detail::StateReader r(blob);
  r.expect("fedsurv-model");
  const auto version = r.count();
  if (version != kModelStateVersion) {
    throw ModelStateError("model state: unsupported version " + std::to_string(version));
  }
  r.expect("family");
  const auto family = r.word();
  ModelState out;
  if (family == "cox") {
    CoxModel m;
    r.expect("dimension");
    const auto p = r.count();
    m.standardization = detail::read_standardization(r);
    r.expect("beta");
    m.beta = r.nums();
    if (m.beta.size() != p || m.standardization.dimension() != p) {
      throw ModelStateError("model state: cox shape mismatch");
    }
    r.expect("baseline");
    m.baseline = detail::read_curve(r);
    r.expect("fit");
    m.converged = r.count() != 0;
    m.iterations = static_cast<int>(r.count());
    m.loss = r.num();
    out = std::move(m);
  } else if (family == "neural") {
    NeuralRiskModel m;
    r.expect("variant");
    const auto variant = r.word();
    if (variant == "deepsurv") {
      m.variant = NeuralVariant::deepsurv;
    } else if (variant == "coxnnet") {
      m.variant = NeuralVariant::coxnnet;
    } else {
      throw ModelStateError("model state: unknown variant '" + variant + "'");
    }
    r.expect("dimension");
    r.count();
    m.input = detail::read_standardization(r);
    r.expect("layers");
    const auto n_layers = r.count();
    for (std::uint64_t l = 0; l < n_layers; ++l) {
      r.expect("layer");
      DenseLayer L;
      const auto in = static_cast<Eigen::Index>(r.count());
      const auto outs = static_cast<Eigen::Index>(r.count());
      const auto act = r.word();
      L.activation = act == "relu" ? Activation::relu : Activation::linear;
      if (act != "relu" && act != "linear") throw ModelStateError("model state: unknown activation");
      L.batch_norm = r.count() != 0;
      L.dropout = r.num();
      L.weights = Eigen::MatrixXd::Zero(outs, in);
      L.bias = Eigen::VectorXd::Zero(outs);
      if (L.batch_norm) {
        L.running_mean = Eigen::VectorXd::Zero(outs);
        L.running_var = Eigen::VectorXd::Ones(outs);
      }
      m.layers.push_back(std::move(L));
    }
    r.expect("parameters");
    const auto params = r.nums();
    r.expect("norm_stats");
    const auto stats = r.nums();
    try {
      assign_parameters(m, params);
      assign_norm_stats(m, stats);
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ModelStateError(std::string("model state: ") + e.what());
    }
    out = std::move(m);
  } else if (family == "forest") {
    SurvivalForest f;
    r.expect("dimension");
    f.dimension = r.count();
    r.expect("grid");
    f.grid = r.nums();
    r.expect("trees");
    const auto n = r.count();
    for (std::uint64_t t = 0; t < n; ++t) f.trees.push_back(detail::read_tree(r, f.dimension));
    out = std::move(f);
  } else {
    throw ModelStateError("model state: unknown family '" + family + "'");
  }
  r.expect("end");
  return out;
}

/// FNV-1a digest of the encoded state, used as a snapshot identifier.
inline std::string model_fingerprint(const ModelState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : encode_model_state(state)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return s;
}

}  // namespace fedsurv
