#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lzn/data.hpp"
#include "lzn/models.hpp"
#include "lzn/training.hpp"

namespace lzn {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File contents do not follow the expected format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint layout, all little-endian:
//   "LZNC" | u32 version (1) | u32 count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
/// Reads the whole file before returning; on any error nothing is returned.
std::vector<NamedTensor> load_checkpoint(const std::string& path);

/// Copies values from `source` into the tensors of `target` with the same
/// names. Every target name must be present with an identical shape.
void assign_parameters(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// CSV with header x0..x{d-1}.
void write_samples(const std::string& path, const Tensor& points);
/// Same with a final `label` column.
void write_labeled_samples(const std::string& path, const Tensor& points, const std::vector<std::size_t>& labels);
/// Reads a file written by write_samples. The label column is optional.
Dataset read_samples(const std::string& path);

/// Metric log with header iter,loss_total,loss_rf,loss_align,grad_norm,wall_ms.
/// With `append` the rows go after an existing file's rows and the header is
/// written only when the file is new or empty.
void write_metrics(const std::string& path, const MetricLog& rows, bool append = false);

/// Generic CSV writer: one header, rows of doubles.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows);

}  // namespace lzn
