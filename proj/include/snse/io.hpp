#pragma once

// On-disk formats.
//
// Noise path cache ("NSW1"): magic, then little-endian L, M (i64), N_fine
// (i64), T, seed (u64), Q scale, Q decay, followed by the fine increments
// [pair][component][step] as little-endian doubles.
//
// Trajectory cache ("NST1"): magic, then L, M (i64), N (i64), T, nu, scheme
// kind (i64), seed (u64), followed by N + 1 states, each the coefficients
// (Re x, Im x, Re y, Im y) of every stored mode as little-endian doubles.
//
// Sparse triplets: one "row col value" line per stored entry, 0-based, value
// printed with 17 significant digits, preceded by a "# rows cols nnz" line.
//
// CSV artifacts start with "# manifest=<16 hex digits>", the FNV-1a hash of
// the run manifest.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snse/config.hpp"
#include "snse/experiments.hpp"
#include "snse/fem.hpp"
#include "snse/noise.hpp"
#include "snse/time_scheme.hpp"

namespace snse {

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void write_noise_path(const std::string& file, const NoisePath& path);
/// Throws FormatError on a wrong magic string or a truncated file.
NoisePath read_noise_path(const std::string& file);

void write_trajectory(const std::string& file, const Trajectory& traj);
Trajectory read_trajectory(const std::string& file);

void write_triplets(const std::string& file, const SparseMatrix& m);
SparseMatrix read_triplets(const std::string& file);

std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

struct Manifest {
  std::string command;
  std::string config_text;  // echo(cfg)
  std::uint64_t seed = 0;
  int replicates = 0;
  std::vector<std::uint64_t> replicate_seeds;
  std::string version = "1";

  std::string json() const;
  std::uint64_t hash() const;
};

Manifest make_manifest(const std::string& command, const ExperimentConfig& cfg);

/// Writers for the analysis artifacts. `format` is "csv" or "json"; the file
/// extension is chosen from it. Each returns the path written.
std::string write_rates(const std::string& dir, const std::string& stem, const RateReport& rep,
                        const Manifest& man, const std::string& format);
std::string write_moments(const std::string& dir, const MomentReport& rep, const Manifest& man,
                          const std::string& format);
std::string write_exp_moments(const std::string& dir, const std::vector<ExpMomentRow>& rows,
                              const Manifest& man, const std::string& format);
std::string write_conditions(const std::string& dir, const ConditionReport& rep,
                             const Manifest& man, const std::string& format);
std::string write_regularity(const std::string& dir, const RegularityReport& rep,
                             const Manifest& man, const std::string& format);
std::string write_constants(const std::string& dir, const ConstantEstimate& est,
                            const Manifest& man, const std::string& format);
std::string write_ou_validation(const std::string& dir, const OuValidation& ou,
                                const Manifest& man, const std::string& format);
std::string write_diagnostics(const std::string& dir, const Trajectory& traj, const Manifest& man,
                              const std::string& format);
std::string write_manifest(const std::string& dir, const Manifest& man);

/// A small table: header plus rows of preformatted cells, written either as
/// CSV (with the manifest comment line) or as a JSON array of objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string write_table(const std::string& dir, const std::string& stem, const Table& t,
                        const Manifest& man, const std::string& format);

std::string format_double(double v);

}  // namespace snse
