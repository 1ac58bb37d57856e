#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "geoclr/dataset.hpp"

namespace geoclr {

/// Entry point of the `geoclr` tool. Returns the process exit code:
/// 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Latent CSV `id,h0,...,h{d-1}` with round-trip exact values.
struct LatentTable {
  std::vector<ImageId> ids;
  Eigen::MatrixXd h;
};
void write_latents(const std::string& path, const LatentTable& table);
LatentTable read_latents(const std::string& path);

/// Annotation CSV `id,label` with class names as labels.
void write_annotations(const std::string& path, const std::vector<std::pair<ImageId, std::string>>& rows);
std::vector<std::pair<ImageId, std::string>> read_annotations(const std::string& path);

}  // namespace geoclr
