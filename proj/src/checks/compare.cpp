#include "neo/checks/compare.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>

#include "json.hpp"
#include "neo/core/errors.hpp"

namespace neo::checks {

namespace {

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Fills a report from paired values; non-finite values fail it.
OracleReport make_report(int case_id, const std::string& pairing, std::span<const double> got,
                         std::span<const double> want, double tolerance) {
  OracleReport r;
  r.case_id = case_id;
  r.pairing = pairing;
  r.tolerance = tolerance;
  bool finite = got.size() == want.size();
  for (std::size_t i = 0; finite && i < got.size(); ++i) {
    if (!std::isfinite(got[i]) || !std::isfinite(want[i])) {
      finite = false;
      break;
    }
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(got[i] - want[i]));
  }
  const double scale = max_abs(want);
  r.max_rel_diff = scale > 0 ? r.max_abs_diff / scale : r.max_abs_diff;
  if (!finite) {
    r.max_abs_diff = r.max_rel_diff = std::numeric_limits<double>::infinity();
  }
  r.pass = finite && r.max_rel_diff <= tolerance;
  return r;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

NativeRopeTables faulty_tables(const NativeRopeTables& good, Fault fault) {
  if (fault == Fault::kNone) return good;
  NativeRopeTables bad;
  for (int a = 0; a < 3; ++a) {
    const auto& t = good.axes[a];
    std::vector<double> freqs(t.n_freqs());
    for (int m = 0; m < t.n_freqs(); ++m) freqs[m] = -t.frequency(m);
    bad.axes[a] = RopeTable::from_frequencies(t.axis(), t.base(), std::move(freqs), t.max_index());
  }
  return bad;
}

}  // namespace

SequenceLayout random_layout(Rng& rng, std::size_t max_tokens) {
  for (;;) {
    SequenceLayout raw;
    const int n_segments = rng.uniform_int(1, 5);
    for (int s = 0; s < n_segments; ++s) {
      const int kind = rng.uniform_int(0, 2);
      if (kind == 0) {
        raw.segments.push_back(TextRun{rng.uniform_int(1, 8)});
      } else if (kind == 1) {
        raw.segments.push_back(ImageGrid{rng.uniform_int(1, 3), rng.uniform_int(1, 3)});
      } else {
        raw.segments.push_back(
            VideoClip{rng.uniform_int(1, 3), rng.uniform_int(1, 2), rng.uniform_int(1, 2)});
      }
    }
    auto layout = insert_markers(raw);
    if (layout.total_len() <= max_tokens) return layout;
  }
}

template <std::floating_point T>
void randomize_parameters(ParameterStore<T>& store, Rng& rng, double stddev) {
  for (const auto& [name, entry] : store.entries()) {
    const double base = entry.init_tag == InitTag::kOnes ? 1.0 : 0.0;
    for (T& v : store.at(name).tensor.mutable_values()) {
      v = static_cast<T>(base + rng.normal(0.0, stddev));
    }
  }
}

template <std::floating_point T>
void randomize_parameters_fan_in(ParameterStore<T>& store, Rng& rng, double gain,
                                 double vector_stddev) {
  for (const auto& [name, entry] : store.entries()) {
    auto& tensor = store.at(name).tensor;
    const double base = entry.init_tag == InitTag::kOnes ? 1.0 : 0.0;
    const double sd = tensor.rank() == 2
                          ? gain / std::sqrt(static_cast<double>(tensor.rows()))
                          : vector_stddev;
    for (T& v : tensor.mutable_values()) v = static_cast<T>(base + rng.normal(0.0, sd));
  }
}

oracle::Matrix to_matrix(const Tensor<double>& t) {
  if (t.rank() != 2) throw ShapeError("to_matrix expects rank 2, got " + shape_string(t.shape()));
  oracle::Matrix m(t.rows(), t.cols());
  m.data.assign(t.values().begin(), t.values().end());
  return m;
}

oracle::Geometry to_geometry(const NativeAttentionConfig& cfg) {
  oracle::Geometry g;
  g.n_q_heads = cfg.n_q_heads;
  g.n_kv_heads = cfg.n_kv_heads;
  g.d_part = {cfg.d_head_t, cfg.d_head_h, cfg.d_head_w};
  g.d_v = cfg.d_head_t;
  g.beta = {cfg.beta_t, cfg.beta_h, cfg.beta_w};
  g.eps = cfg.rmsnorm_eps;
  g.scale = cfg.scale();
  return g;
}

oracle::Layer to_layer(const AttentionWeights<double>& w, const NativeAttentionConfig& cfg) {
  oracle::Layer l;
  const int widths[3] = {cfg.d_head_t, cfg.d_head_h, cfg.d_head_w};
  for (int a = 0; a < 3; ++a) {
    if (widths[a] == 0) continue;
    l.wq[a] = to_matrix(w.wq[a]);
    l.wk[a] = to_matrix(w.wk[a]);
    l.q_norm[a].assign(w.q_norm[a].values().begin(), w.q_norm[a].values().end());
    l.k_norm[a].assign(w.k_norm[a].values().begin(), w.k_norm[a].values().end());
  }
  l.wv = to_matrix(w.wv);
  l.wo = to_matrix(w.wo);
  return l;
}

oracle::Block to_block(const NativeBlock<double>& b, const NativeAttentionConfig& cfg) {
  oracle::Block o;
  o.attn_norm.assign(b.attn_norm.values().begin(), b.attn_norm.values().end());
  o.attn = to_layer(b.attn, cfg);
  o.ffn_norm.assign(b.ffn_norm.values().begin(), b.ffn_norm.values().end());
  o.gate = to_matrix(b.gate);
  o.up = to_matrix(b.up);
  o.down = to_matrix(b.down);
  return o;
}

std::vector<OracleReport> compare_all(std::uint64_t seed, int n_cases,
                                      const CompareTolerances& tol, Fault fault) {
  const auto cfg = toy_config().attn;
  const auto good_tables = NativeRopeTables::build(cfg, 256);
  const auto tables = faulty_tables(good_tables, fault);
  const auto geometry = to_geometry(cfg);
  Rng rng(seed);
  std::vector<OracleReport> reports;

  for (int c = 0; c < n_cases; ++c) {
    const auto layout = random_layout(rng, 64);
    const std::size_t n = layout.total_len();

    // Position allocation.
    const auto got_pos = allocate_positions(layout);
    const auto want_pos = oracle::enumerate_positions(layout);
    auto flatten = [](const std::vector<PositionTriple>& ps) {
      std::vector<double> out;
      for (const auto& p : ps) out.insert(out.end(), {double(p.t), double(p.h), double(p.w)});
      return out;
    };
    const auto gp = flatten(got_pos), wp = flatten(want_pos);
    reports.push_back(make_report(c, "positions", gp, wp, tol.positions));

    // Mask predicate, both modes.
    std::vector<double> gm, wm;
    for (bool mixed : {true, false}) {
      const auto spec = build_mask(layout, mixed ? AttentionMode::kMixed : AttentionMode::kCausal);
      const auto dense = spec.dense();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gm.push_back(dense[i * n + j]);
          wm.push_back(oracle::mask_allowed(layout, mixed, i, j) ? 1.0 : 0.0);
        }
      }
    }
    reports.push_back(make_report(c, "mask", gm, wm, tol.mask));

    // Per-token rotation of random parts.
    std::vector<double> gr, wr;
    for (std::size_t i = 0; i < n; ++i) {
      const int idx[3] = {want_pos[i].t, want_pos[i].h, want_pos[i].w};
      for (int a = 0; a < 3; ++a) {
        auto v = random_vector(geometry.d_part[a], rng);
        const auto want = oracle::trig_rotate(v, idx[a], geometry.beta[a]);
        rotate_part<double>(v, idx[a], tables.axes[a]);
        gr.insert(gr.end(), v.begin(), v.end());
        wr.insert(wr.end(), want.begin(), want.end());
      }
    }
    reports.push_back(make_report(c, "rope", gr, wr, tol.rope));

    // Full attention layer with non-zero H/W keys.
    ParameterStore<double> store;
    const auto weights = AttentionWeights<double>::create(store, "attn", cfg, rng, 0.02);
    randomize_parameters(store, rng, 0.3);
    Tensor<double> x({n, static_cast<std::size_t>(cfg.d_model)}, random_vector(n * cfg.d_model, rng));
    const auto ctx = make_context<double>(allocate_positions(layout), build_mask(layout), tables);
    const auto got = native_attention(x, weights, ctx, cfg);
    const auto want = oracle::attention(
        to_matrix(x), to_layer(weights, cfg), want_pos,
        [&](std::size_t i, std::size_t j) { return oracle::mask_allowed(layout, true, i, j); },
        geometry);
    reports.push_back(make_report(c, "attention", got.values(), want.data, tol.attention));
  }
  return reports;
}

std::vector<OracleReport> worst_per_pairing(const std::vector<OracleReport>& reports) {
  std::vector<OracleReport> worst;
  for (const auto& r : reports) {
    auto it = std::find_if(worst.begin(), worst.end(),
                           [&](const OracleReport& w) { return w.pairing == r.pairing; });
    if (it == worst.end()) {
      worst.push_back(r);
    } else if (r.pass == it->pass ? r.max_rel_diff > it->max_rel_diff : !r.pass) {
      *it = r;
    }
  }
  return worst;
}

bool all_pass(const std::vector<OracleReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
}

void write_reports_jsonl(const std::filesystem::path& path,
                         const std::vector<OracleReport>& reports) {
  std::ofstream out(path);
  for (const auto& r : reports) {
    nlohmann::json j{{"case", r.case_id},           {"pairing", r.pairing},
                     {"max_abs_diff", r.max_abs_diff}, {"max_rel_diff", r.max_rel_diff},
                     {"tolerance", r.tolerance},    {"pass", r.pass}};
    out << j.dump() << '\n';
  }
  if (!out) throw FormatError("cannot write oracle report to " + path.string());
}

template void randomize_parameters<float>(ParameterStore<float>&, Rng&, double);
template void randomize_parameters<double>(ParameterStore<double>&, Rng&, double);
template void randomize_parameters_fan_in<float>(ParameterStore<float>&, Rng&, double, double);
template void randomize_parameters_fan_in<double>(ParameterStore<double>&, Rng&, double, double);

}  // namespace neo::checks
