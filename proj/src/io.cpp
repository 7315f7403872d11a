#include "lzn/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lzn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'Z', 'N', 'C'};

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class T>
  T get(const char* what) {
    T value;
    take(&value, sizeof(T), what);
    return value;
  }
  void take(void* out, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_ + ": truncated checkpoint while reading " + what + " at byte " + std::to_string(pos_));
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

void finish(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": bad number '" + s + "'");
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) put<std::uint64_t>(os, d);
    const auto data = t.value.data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  std::ofstream file = open_out(path, std::ios::binary | std::ios::trunc);
  const std::string bytes = os.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  finish(file, path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << file.rdbuf();
  Reader in(buf.str(), path);
  char magic[4];
  in.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": bad magic, not a checkpoint");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint32_t>("name length");
    if (len > in.remaining()) throw FormatError(path + ": truncated checkpoint while reading name");
    std::string name(len, '\0');
    in.take(name.data(), len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = in.get<std::uint64_t>("dims");
      shape.push_back(static_cast<std::size_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (n > in.remaining() / sizeof(double)) {
      throw FormatError(path + ": truncated checkpoint while reading payload of '" + name + "'");
    }
    std::vector<double> v(n);
    in.take(v.data(), n * sizeof(double), "payload");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(v))});
  }
  if (!in.done()) throw FormatError(path + ": trailing bytes after " + std::to_string(count) + " tensors");
  return out;
}

void assign_parameters(const std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name[s.name] = &s.value;
  for (const auto& t : target) {
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + t.name + "'");
    if (it->second->shape() != t.value.shape()) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " + to_string(it->second->shape()) +
                        ", model expects " + to_string(t.value.shape()));
    }
  }
  for (const auto& t : target) {
    const auto src = by_name.at(t.name)->data();
    Tensor dst = t.value;
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

namespace {

void write_points(const std::string& path, const Tensor& points, const std::vector<std::size_t>* labels) {
  if (points.rank() != 2) throw ShapeError("write_samples: points must be a matrix, got " + to_string(points.shape()));
  if (labels != nullptr && labels->size() != points.rows()) throw ShapeError("write_samples: label count mismatch");
  std::ofstream os = open_out(path, std::ios::out | std::ios::trunc);
  std::string text;
  for (std::size_t k = 0; k < points.cols(); ++k) text += (k ? ",x" : "x") + std::to_string(k);
  if (labels != nullptr) text += ",label";
  text += '\n';
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t k = 0; k < points.cols(); ++k) {
      if (k) text += ',';
      text += format_double(points.at(i, k));
    }
    if (labels != nullptr) text += ',' + std::to_string((*labels)[i]);
    text += '\n';
  }
  os << text;
  finish(os, path);
}

}  // namespace

void write_samples(const std::string& path, const Tensor& points) { write_points(path, points, nullptr); }

void write_labeled_samples(const std::string& path, const Tensor& points, const std::vector<std::size_t>& labels) {
  write_points(path, points, &labels);
}

Dataset read_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": missing header");
  const auto header = split(line);
  std::size_t d = header.size();
  const bool labeled = d > 0 && header.back() == "label";
  if (labeled) --d;
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "x" + std::to_string(k)) throw FormatError(path + ": unexpected column '" + header[k] + "'");
  }
  Dataset ds;
  ds.name = path;
  std::vector<double> v;
  std::size_t rows = 0, line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields");
    for (std::size_t k = 0; k < d; ++k) v.push_back(parse_double(cells[k], where));
    if (labeled) {
      const double l = parse_double(cells[d], where);
      if (l < 0 || l != static_cast<double>(static_cast<std::size_t>(l))) throw FormatError(where + ": bad label");
      ds.labels.push_back(static_cast<std::size_t>(l));
      ds.classes = std::max(ds.classes, ds.labels.back() + 1);
    }
    ++rows;
  }
  ds.points = Tensor::matrix(rows, d, std::move(v));
  return ds;
}

void write_metrics(const std::string& path, const MetricLog& rows, bool append) {
  bool header = true;
  if (append) {
    std::ifstream existing(path, std::ios::binary | std::ios::ate);
    header = !existing || existing.tellg() == 0;
  }
  std::ofstream os = open_out(path, append ? std::ios::out | std::ios::app : std::ios::out | std::ios::trunc);
  std::string text;
  if (header) text += "iter,loss_total,loss_rf,loss_align,grad_norm,wall_ms\n";
  for (const auto& r : rows) {
    text += std::to_string(r.iter) + ',' + format_double(r.loss_total) + ',' + format_double(r.loss_rf) + ',' +
            format_double(r.loss_align) + ',' + format_double(r.grad_norm) + ',' + format_double(r.wall_ms) + '\n';
  }
  os << text;
  finish(os, path);
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows) {
  std::ofstream os = open_out(path, std::ios::out | std::ios::trunc);
  std::string text;
  for (std::size_t k = 0; k < header.size(); ++k) text += (k ? "," : "") + header[k];
  text += '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw ShapeError("write_table: row width does not match header");
    for (std::size_t k = 0; k < row.size(); ++k) text += (k ? "," : "") + format_double(row[k]);
    text += '\n';
  }
  os << text;
  finish(os, path);
}

}  // namespace lzn
