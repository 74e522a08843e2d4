#include "pathlaw/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pathlaw::io {

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw InvalidInput(std::string("csv: bad number in ") + what);
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string::npos) next = text.size();
    if (next > pos) out.push_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInput("write_atomic: cannot open " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw InvalidInput("write_atomic: short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("read_file: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string snapshot_csv(const SnapshotSeries& series) {
  const int d = series.dim();
  std::string out = "time_index,time";
  for (int c = 0; c < d; ++c) out += ",x_" + std::to_string(c);
  out += "\n";
  for (int i = 0; i < series.num_times(); ++i) {
    const Snapshot& s = series.snapshots[i];
    for (int r = 0; r < s.points.rows(); ++r) {
      out += std::to_string(i);
      out += ',';
      append_double(out, s.time);
      for (int c = 0; c < d; ++c) {
        out += ',';
        append_double(out, s.points(r, c));
      }
      out += '\n';
    }
  }
  return out;
}

SnapshotSeries parse_snapshot_csv(const std::string& text) {
  const auto rows = lines_of(text);
  if (rows.empty()) throw InvalidInput("snapshot csv: empty file");
  const auto header = split_line(rows[0]);
  if (header.size() < 3 || header[0] != "time_index" || header[1] != "time")
    throw InvalidInput("snapshot csv: bad header");
  const int d = static_cast<int>(header.size()) - 2;

  std::vector<int> tindex;
  std::vector<double> tvalue;
  std::vector<std::vector<double>> coords;
  int max_t = -1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split_line(rows[r]);
    if (static_cast<int>(f.size()) != d + 2)
      throw InvalidInput("snapshot csv: wrong field count at data row " + std::to_string(r));
    const int ti = static_cast<int>(parse_double(f[0], "time_index"));
    tindex.push_back(ti);
    tvalue.push_back(parse_double(f[1], "time"));
    std::vector<double> x(d);
    for (int c = 0; c < d; ++c) x[c] = parse_double(f[c + 2], "coordinate");
    coords.push_back(std::move(x));
    max_t = std::max(max_t, ti);
  }
  if (max_t < 0) throw InvalidInput("snapshot csv: no data rows");

  SnapshotSeries series;
  series.snapshots.resize(max_t + 1);
  std::vector<int> counts(max_t + 1, 0);
  for (std::size_t r = 0; r < tindex.size(); ++r) ++counts[tindex[r]];
  for (int i = 0; i <= max_t; ++i) {
    if (counts[i] == 0) throw InvalidInput("snapshot csv: missing time_index " + std::to_string(i));
    series.snapshots[i].points.resize(counts[i], d);
  }
  std::vector<int> fill(max_t + 1, 0);
  for (std::size_t r = 0; r < tindex.size(); ++r) {
    const int i = tindex[r];
    series.snapshots[i].time = tvalue[r];
    for (int c = 0; c < d; ++c) series.snapshots[i].points(fill[i], c) = coords[r][c];
    ++fill[i];
  }
  return series;
}

std::string points_csv(const MatrixXd& pts, const std::vector<char>& synthetic) {
  const int d = static_cast<int>(pts.cols());
  std::string out = "point_index";
  for (int c = 0; c < d; ++c) out += ",x_" + std::to_string(c);
  out += ",synthetic\n";
  for (int r = 0; r < pts.rows(); ++r) {
    out += std::to_string(r);
    for (int c = 0; c < d; ++c) {
      out += ',';
      append_double(out, pts(r, c));
    }
    out += ',';
    out += (!synthetic.empty() && synthetic[r]) ? '1' : '0';
    out += '\n';
  }
  return out;
}

MatrixXd parse_points_csv(const std::string& text, std::vector<char>* synthetic) {
  const auto rows = lines_of(text);
  if (rows.empty()) throw InvalidInput("points csv: empty file");
  const auto header = split_line(rows[0]);
  if (header.size() < 3 || header[0] != "point_index" || header.back() != "synthetic")
    throw InvalidInput("points csv: bad header");
  const int d = static_cast<int>(header.size()) - 2;
  MatrixXd pts(rows.size() - 1, d);
  if (synthetic) synthetic->assign(rows.size() - 1, 0);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split_line(rows[r]);
    if (static_cast<int>(f.size()) != d + 2)
      throw InvalidInput("points csv: wrong field count at row " + std::to_string(r));
    const int idx = static_cast<int>(parse_double(f[0], "point_index"));
    if (idx != static_cast<int>(r) - 1) throw InvalidInput("points csv: indices must be dense");
    for (int c = 0; c < d; ++c) pts(idx, c) = parse_double(f[c + 1], "coordinate");
    if (synthetic) (*synthetic)[idx] = f[d + 1] == "1" ? 1 : 0;
  }
  return pts;
}

std::string marginals_csv(const std::vector<VectorXd>& marginals) {
  std::string out = "time_index,point_index,weight\n";
  for (std::size_t i = 0; i < marginals.size(); ++i)
    for (int j = 0; j < marginals[i].size(); ++j) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(j);
      out += ',';
      append_double(out, marginals[i][j]);
      out += '\n';
    }
  return out;
}

std::vector<VectorXd> parse_marginals_csv(const std::string& text, int support_size) {
  const auto rows = lines_of(text);
  if (rows.empty() || rows[0] != "time_index,point_index,weight")
    throw InvalidInput("marginals csv: bad header");
  std::vector<VectorXd> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split_line(rows[r]);
    if (f.size() != 3) throw InvalidInput("marginals csv: bad row " + std::to_string(r));
    const int i = static_cast<int>(parse_double(f[0], "time_index"));
    const int j = static_cast<int>(parse_double(f[1], "point_index"));
    if (i >= static_cast<int>(out.size())) out.resize(i + 1, VectorXd::Zero(support_size));
    if (j < 0 || j >= support_size) throw InvalidInput("marginals csv: point index out of range");
    out[i][j] = parse_double(f[2], "weight");
  }
  return out;
}

std::string couplings_csv(const Reconstruction& rec, double threshold) {
  std::string out = "gap_index,source_index,target_index,mass\n";
  const int n = rec.ops->size();
  const MatrixXd& P = rec.ops->points();
  for (std::size_t g = 0; g < rec.transport.size(); ++g) {
    const LogCoupling& lc = rec.transport[g];
    for (int j = 0; j < n; ++j) {
      if (!std::isfinite(lc.lrow[j])) continue;
      for (int k = 0; k < n; ++k) {
        if (!std::isfinite(lc.lcol[k])) continue;
        const double c0 = 0.5 * (P.row(j) - P.row(k)).squaredNorm();
        const double t = lc.lrow[j] + lc.lcol[k] - c0 * lc.inv_eps;
        if (t <= -745.0) continue;
        const double mass = std::exp(t);
        if (mass < threshold) continue;
        out += std::to_string(g);
        out += ',';
        out += std::to_string(j);
        out += ',';
        out += std::to_string(k);
        out += ',';
        append_double(out, mass);
        out += '\n';
      }
    }
  }
  return out;
}

std::string paths_csv(const PathEnsemble& ens, const Support& support) {
  return paths_csv(ens.flat_coords(support), ens.times, support.dim());
}

std::string paths_csv(const MatrixXd& flat, const VectorXd& times, int dim) {
  const int T = static_cast<int>(times.size());
  std::string out = "path_id,time_index,time";
  for (int c = 0; c < dim; ++c) out += ",x_" + std::to_string(c);
  out += "\n";
  for (int p = 0; p < flat.rows(); ++p)
    for (int t = 0; t < T; ++t) {
      out += std::to_string(p);
      out += ',';
      out += std::to_string(t);
      out += ',';
      append_double(out, times[t]);
      for (int c = 0; c < dim; ++c) {
        out += ',';
        append_double(out, flat(p, t * dim + c));
      }
      out += '\n';
    }
  return out;
}

MatrixXd parse_paths_csv(const std::string& text, VectorXd* times, int* dim_out) {
  const auto rows = lines_of(text);
  if (rows.empty()) throw InvalidInput("paths csv: empty file");
  const auto header = split_line(rows[0]);
  if (header.size() < 4 || header[0] != "path_id") throw InvalidInput("paths csv: bad header");
  const int d = static_cast<int>(header.size()) - 3;
  int max_p = -1, max_t = -1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split_line(rows[r]);
    max_p = std::max(max_p, static_cast<int>(parse_double(f[0], "path_id")));
    max_t = std::max(max_t, static_cast<int>(parse_double(f[1], "time_index")));
  }
  MatrixXd flat(max_p + 1, (max_t + 1) * d);
  if (times) times->resize(max_t + 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split_line(rows[r]);
    if (static_cast<int>(f.size()) != d + 3) throw InvalidInput("paths csv: bad row");
    const int p = static_cast<int>(parse_double(f[0], "path_id"));
    const int t = static_cast<int>(parse_double(f[1], "time_index"));
    if (times) (*times)[t] = parse_double(f[2], "time");
    for (int c = 0; c < d; ++c) flat(p, t * d + c) = parse_double(f[c + 3], "coordinate");
  }
  if (dim_out) *dim_out = d;
  return flat;
}

namespace {

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vec_from_json(const json& a) {
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

json reconstruction_json(const Reconstruction& rec) {
  json j;
  j["times"] = vec_json(rec.times);
  j["gap"] = rec.gap;
  j["dual_value"] = rec.dual_value;
  j["primal_value"] = rec.primal_value;
  j["converged"] = rec.converged;
  j["iterations"] = rec.iterations;
  j["ot_dual_convention"] = "gibbs_kernel_with_mass_correction";
  auto dump = [&](const char* key, const std::vector<VectorXd>& vs) {
    json arr = json::array();
    for (const auto& v : vs) arr.push_back(vec_json(v));
    j[key] = arr;
  };
  dump("marginals", rec.marginals);
  dump("intermediates", rec.intermediates);
  dump("data_marginals", rec.data_marginals);
  dump("data_fit_marginals", rec.data_fit_marginals);
  json g = json::array();
  for (int r = 0; r < rec.growth.rows(); ++r) g.push_back(vec_json(rec.growth.row(r).transpose()));
  j["growth"] = g;
  json tr = json::array();
  for (const auto& lc : rec.transport) {
    json t;
    t["inv_eps"] = lc.inv_eps;
    t["lrow"] = vec_json(lc.lrow);
    t["lcol"] = vec_json(lc.lcol);
    tr.push_back(t);
  }
  j["transport"] = tr;
  return j;
}

Reconstruction parse_reconstruction_json(const json& j, const Support& support) {
  Reconstruction rec;
  rec.ops = std::make_shared<PairwiseOps>(support.points);
  rec.times = vec_from_json(j.at("times"));
  rec.gap = j.value("gap", 0.0);
  rec.dual_value = j.value("dual_value", 0.0);
  rec.primal_value = j.value("primal_value", 0.0);
  rec.converged = j.value("converged", false);
  rec.iterations = j.value("iterations", 0);
  auto load = [&](const char* key, std::vector<VectorXd>& vs) {
    vs.clear();
    for (const auto& a : j.at(key)) vs.push_back(vec_from_json(a));
  };
  load("marginals", rec.marginals);
  load("intermediates", rec.intermediates);
  load("data_marginals", rec.data_marginals);
  load("data_fit_marginals", rec.data_fit_marginals);
  const auto& g = j.at("growth");
  if (!g.empty()) {
    rec.growth.resize(g.size(), support.size());
    for (std::size_t r = 0; r < g.size(); ++r)
      rec.growth.row(static_cast<int>(r)) = vec_from_json(g[r]).transpose();
  }
  for (const auto& t : j.at("transport")) {
    LogCoupling lc;
    lc.inv_eps = t.at("inv_eps").get<double>();
    lc.lrow = vec_from_json(t.at("lrow"));
    lc.lcol = vec_from_json(t.at("lcol"));
    rec.transport.push_back(std::move(lc));
  }
  return rec;
}

std::uint64_t stable_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json make_manifest(const std::string& command, const json& resolved_config,
                   const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "pathlaw";
  m["version"] = "0.1.0";
  m["command"] = command;
  m["config"] = resolved_config;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016" PRIx64, stable_hash(resolved_config.dump()));
  m["config_hash"] = hex;
  m["outputs"] = outputs;
  return m;
}

}  // namespace pathlaw::io
