#pragma once

#include <string>

#include "eco/metrics.hpp"
#include "eco/training.hpp"

namespace eco {

/// Binary format: magic "ECOTRAJ1", n u32 LE, T u64 LE, dt_sample f64 LE,
/// 16-byte zero-padded system tag, then T*n f64 LE row-major.
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

/// JSON checkpoint; floats print as shortest round-trip decimals so
/// load(save(x)) is bit-exact. Theorem 1 conditions are re-validated on load.
void save_checkpoint(const std::string& path, const TrainState& state,
                     bool include_optimizer = true);
TrainState load_checkpoint(const std::string& path);

enum class ExportKind { trajectory, energy_trace, spectrum, pca_projection, histogram };
ExportKind export_kind_from_string(const std::string& s);

/// CSV writers over in-memory sources (header row, locale-free decimals).
void export_trajectory_csv(const Trajectory& traj, const std::string& path);
void export_energy_trace_csv(std::span<const double> trace, const std::string& path);
void export_spectrum_csv(std::span<const double> spectrum, const std::string& path);
void export_pca_csv(const Matrix& projected, const std::string& path);
void export_histogram_csv(std::span<const double> probabilities, const HistogramSpec& spec,
                          const std::string& path);

/// File-level dispatcher used by the CLI. energy_trace needs `ckpt_path`;
/// pca_projection may take `basis_path` (defaults to the input trajectory).
void export_csv(ExportKind kind, const std::string& in_path, const std::string& out_path,
                const std::string& ckpt_path = "", const std::string& basis_path = "");

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double x);

}  // namespace eco
