#pragma once

#include "pathlaw/markov.hpp"
#include "pathlaw/solver.hpp"

#include <string>

#include "json.hpp"

namespace pathlaw::io {

using json = nlohmann::json;

// write via temp file + rename so readers never observe partial output
void write_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Snapshot CSV: header time_index,time,x_0,...,x_{d-1}; 17 significant
// digits so a round trip is bit-identical.
std::string snapshot_csv(const SnapshotSeries& series);
SnapshotSeries parse_snapshot_csv(const std::string& text);

// Point table: point_index,x_0,...,x_{d-1},synthetic
std::string points_csv(const MatrixXd& pts, const std::vector<char>& synthetic = {});
MatrixXd parse_points_csv(const std::string& text, std::vector<char>* synthetic = nullptr);

// Marginals: time_index,point_index,weight
std::string marginals_csv(const std::vector<VectorXd>& marginals);
std::vector<VectorXd> parse_marginals_csv(const std::string& text, int support_size);

// Couplings: gap_index,source_index,target_index,mass; entries < threshold omitted
std::string couplings_csv(const Reconstruction& rec, double threshold = 1e-12);

// Paths: path_id,time_index,time,x_0,...,x_{d-1}
std::string paths_csv(const PathEnsemble& ens, const Support& support);
std::string paths_csv(const MatrixXd& flat, const VectorXd& times, int dim);
MatrixXd parse_paths_csv(const std::string& text, VectorXd* times, int* dim);

// Reconstruction model document (enough to sample paths, estimate drift and
// augment without re-solving).
json reconstruction_json(const Reconstruction& rec);
Reconstruction parse_reconstruction_json(const json& j, const Support& support);

std::uint64_t stable_hash(const std::string& text);

// Run manifest written alongside every output: the resolved config, its
// hash, seeds and solver diagnostics make the run repeatable bit-for-bit.
json make_manifest(const std::string& command, const json& resolved_config,
                   const std::vector<std::string>& outputs);

}  // namespace pathlaw::io
