#pragma once
// Datasets: toy manifold generators, CSV/IDX loading, min-max
// normalization, seeded splitting, and the "CDE1" binary model container.

#include "cde/autoencoder.hpp"
#include "cde/density.hpp"
#include "cde/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cde {

struct Dataset {
  Matrix data;
  std::optional<std::vector<int>> labels;
  Vector column_min;  // empty until normalized
  Vector column_max;
  std::vector<std::string> header;  // column names when the source had them

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  bool normalized() const { return column_min.size() == data.cols() && data.cols() > 0; }
};

// ---------------------------------------------------------------------------
// Generators

enum class ToyKind { swiss_roll, s_curve, fishbowl };

inline ToyKind toy_kind_from_string(const std::string& s) {
  if (s == "swiss_roll") return ToyKind::swiss_roll;
  if (s == "s_curve") return ToyKind::s_curve;
  if (s == "fishbowl") return ToyKind::fishbowl;
  throw Error("unknown toy dataset kind '" + s + "' (expected swiss_roll, s_curve or fishbowl)");
}

inline Eigen::Vector3d swiss_roll_point(double t, double y) { return {t * std::cos(t), y, t * std::sin(t)}; }

inline Eigen::Vector3d s_curve_point(double t, double y) {
  const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
  return {std::sin(t), y, sign * (std::cos(t) - 1.0)};
}

/// Swiss roll: t ~ U[1.5 pi, 4.5 pi], y ~ U[0, 21].  S-curve: t ~ U[-1.5 pi,
/// 1.5 pi], y ~ U[0, 2].  Fishbowl: uniform on the unit sphere minus the
/// polar cap within cap_angle_deg of the north pole.  Isotropic Gaussian
/// noise of standard deviation `noise` is added to every coordinate.
inline Dataset gen_toy(ToyKind kind, int M, double noise, std::uint64_t seed, double cap_angle_deg = 60.0) {
  if (M < 1) throw Error("gen_toy: M must be >= 1");
  if (!(noise >= 0.0)) throw Error("gen_toy: noise must be >= 0");
  constexpr double pi = std::numbers::pi;
  Rng rng(seed, "data");
  Dataset ds;
  ds.data.resize(M, 3);
  const double cap_z = std::cos(cap_angle_deg * pi / 180.0);
  for (int m = 0; m < M; ++m) {
    Eigen::Vector3d p;
    switch (kind) {
      case ToyKind::swiss_roll: {
        const double t = rng.uniform(1.5 * pi, 4.5 * pi);
        p = swiss_roll_point(t, rng.uniform(0.0, 21.0));
        break;
      }
      case ToyKind::s_curve: {
        const double t = rng.uniform(-1.5 * pi, 1.5 * pi);
        p = s_curve_point(t, rng.uniform(0.0, 2.0));
        break;
      }
      case ToyKind::fishbowl: {
        do {
          p = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
          p /= p.norm();
        } while (p.z() > cap_z);
        break;
      }
    }
    if (noise > 0.0) {
      for (int c = 0; c < 3; ++c) p(c) += rng.normal(0.0, noise);
    }
    ds.data.row(m) = p.transpose();
  }
  return ds;
}

inline Dataset gen_toy(const std::string& kind, int M, double noise, std::uint64_t seed, double cap_angle_deg = 60.0) {
  return gen_toy(toy_kind_from_string(kind), M, noise, seed, cap_angle_deg);
}

/// 2-D anomaly benchmark: normal points on an annulus (radius U[0.8, 1.0])
/// labelled 0, anomalies in a Gaussian blob (sd 0.15) at the centre
/// labelled 1.  Normal rows come first.
inline Dataset gen_annulus_blob(int normal, int anomalies, std::uint64_t seed) {
  if (normal < 1 || anomalies < 0) throw Error("gen_annulus_blob: need normal >= 1, anomalies >= 0");
  Rng rng(seed, "data");
  Dataset ds;
  ds.data.resize(normal + anomalies, 2);
  std::vector<int> labels(static_cast<std::size_t>(normal + anomalies), 0);
  for (int m = 0; m < normal; ++m) {
    const double r = rng.uniform(0.8, 1.0);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ds.data.row(m) << r * std::cos(a), r * std::sin(a);
  }
  for (int m = normal; m < normal + anomalies; ++m) {
    ds.data.row(m) << rng.normal(0.0, 0.15), rng.normal(0.0, 0.15);
    labels[static_cast<std::size_t>(m)] = 1;
  }
  ds.labels = std::move(labels);
  return ds;
}

/// Regression benchmark: x ~ U[0, 1], y = x + N(0, noise^2); columns (x, y).
inline Dataset gen_linear(int M, double noise, std::uint64_t seed) {
  if (M < 1) throw Error("gen_linear: M must be >= 1");
  Rng rng(seed, "data");
  Dataset ds;
  ds.data.resize(M, 2);
  for (int m = 0; m < M; ++m) {
    const double x = rng.uniform();
    ds.data.row(m) << x, x + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
  bool has_labels = false;
  int label_column = -1;  // negative counts from the end
  bool allow_missing = false;  // empty cells become NaN
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses CSV text.  A first row containing any non-numeric cell is taken
/// as a header.  Row numbers in errors are 1-based file lines.
inline Dataset parse_csv(const std::string& text, const CsvOptions& opt = {}) {
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
    line_numbers.push_back(lineno);
  }
  if (rows.empty()) throw Error("csv: no data rows");

  Dataset ds;
  std::size_t first = 0;
  for (const auto& cell : rows.front()) {
    if (!cell.empty() && !detail::parse_number(cell)) {
      ds.header = rows.front();
      first = 1;
      break;
    }
  }
  if (first == rows.size()) throw Error("csv: header but no data rows");
  const std::size_t width = rows[first].size();
  if (first == 1 && ds.header.size() != width) {
    throw Error("csv: row " + std::to_string(line_numbers[1]) + " has " + std::to_string(width) +
                " columns but the header has " + std::to_string(ds.header.size()));
  }
  std::size_t label_col = 0;
  if (opt.has_labels) {
    const int lc = opt.label_column < 0 ? static_cast<int>(width) + opt.label_column : opt.label_column;
    if (lc < 0 || lc >= static_cast<int>(width)) throw Error("csv: label column out of range");
    label_col = static_cast<std::size_t>(lc);
    if (width < 2) throw Error("csv: a labelled file needs at least one feature column");
  }
  const std::size_t features = width - (opt.has_labels ? 1 : 0);
  ds.data.resize(static_cast<Eigen::Index>(rows.size() - first), static_cast<Eigen::Index>(features));
  std::vector<int> labels;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const int lineno = line_numbers[r];
    if (cells.size() != width) {
      throw Error("csv: row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                  " columns, expected " + std::to_string(width));
    }
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const auto value = detail::parse_number(cells[c]);
      const bool missing = cells[c].empty();
      if (!value && !(missing && opt.allow_missing && !(opt.has_labels && c == label_col))) {
        throw Error("csv: row " + std::to_string(lineno) + ", column " + std::to_string(c + 1) + ": " +
                    (missing ? "empty cell" : "not a number '" + cells[c] + "'"));
      }
      if (opt.has_labels && c == label_col) {
        labels.push_back(static_cast<int>(std::lround(*value)));
        continue;
      }
      ds.data(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(out_col++)) =
          value ? *value : std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (opt.has_labels) {
    ds.labels = std::move(labels);
    if (!ds.header.empty()) ds.header.erase(ds.header.begin() + static_cast<std::ptrdiff_t>(label_col));
  }
  return ds;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opt = {}) {
  try {
    return parse_csv(read_file(path), opt);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline std::string format_csv(const Matrix& X, const std::vector<std::string>& header = {}) {
  std::ostringstream o;
  for (std::size_t c = 0; c < header.size(); ++c) o << (c ? "," : "") << header[c];
  if (!header.empty()) o << '\n';
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) o << (c ? "," : "") << detail::format_double(X(r, c));
    o << '\n';
  }
  return o.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void write_csv(const std::string& path, const Matrix& X, const std::vector<std::string>& header = {}) {
  write_file(path, format_csv(X, header));
}

// ---------------------------------------------------------------------------
// Normalization and splitting

/// x' = (x - min) / (max - min), clamped into [0, 1]; constant columns map
/// to 0.5.  NaN cells (missing values) pass through.
inline Dataset minmax_apply(const Dataset& ds, const Vector& mins, const Vector& maxs) {
  if (mins.size() != ds.cols() || maxs.size() != ds.cols()) throw Error("minmax_apply: range width mismatch");
  Dataset out = ds;
  for (Eigen::Index c = 0; c < ds.cols(); ++c) {
    const double range = maxs(c) - mins(c);
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
      double& v = out.data(r, c);
      if (std::isnan(v)) continue;
      v = range > 0.0 ? std::clamp((v - mins(c)) / range, 0.0, 1.0) : 0.5;
    }
  }
  out.column_min = mins;
  out.column_max = maxs;
  return out;
}

inline Dataset minmax_fit_apply(const Dataset& ds) {
  if (ds.rows() < 1) throw Error("minmax_fit_apply: empty dataset");
  Vector mins(ds.cols()), maxs(ds.cols());
  for (Eigen::Index c = 0; c < ds.cols(); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
      const double v = ds.data(r, c);
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo > hi) lo = hi = 0.0;  // column entirely missing
    mins(c) = lo;
    maxs(c) = hi;
  }
  return minmax_apply(ds, mins, maxs);
}

/// Maps normalized values back to data units (constant columns return min).
inline Matrix denormalize(const Matrix& X, const Vector& mins, const Vector& maxs) {
  if (mins.size() != X.cols() || maxs.size() != X.cols()) throw Error("denormalize: range width mismatch");
  Matrix out = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double range = maxs(c) - mins(c);
    if (range > 0.0) {
      out.col(c) = (X.col(c).array() * range + mins(c)).matrix();
    } else {
      out.col(c).setConstant(mins(c));
    }
  }
  return out;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.data = gather_rows(ds.data, idx);
  if (ds.labels) {
    std::vector<int> l;
    l.reserve(idx.size());
    for (auto i : idx) l.push_back((*ds.labels)[i]);
    out.labels = std::move(l);
  }
  out.column_min = ds.column_min;
  out.column_max = ds.column_max;
  out.header = ds.header;
  return out;
}

/// Shuffled disjoint partitions with sizes floor(fraction * M).  When the
/// fractions sum to one the last partition takes the remainder so the split
/// is exhaustive.
inline std::vector<Dataset> split(const Dataset& ds, const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.empty()) throw Error("split: no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw Error("split: fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw Error("split: fractions sum to more than 1");
  const auto M = static_cast<std::size_t>(ds.rows());
  std::vector<std::size_t> order(M);
  for (std::size_t i = 0; i < M; ++i) order[i] = i;
  Rng rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    std::size_t n = static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(M) + 1e-9));
    if (i + 1 == fractions.size() && std::abs(total - 1.0) <= 1e-9) n = M - used;
    if (n < 1) throw Error("split: partition " + std::to_string(i) + " would be empty");
    if (used + n > M) throw Error("split: partitions exceed the dataset");
    sizes.push_back(n);
    used += n;
  }
  std::vector<Dataset> parts;
  std::size_t offset = 0;
  for (std::size_t n : sizes) {
    parts.push_back(take_rows(ds, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                                            order.begin() + static_cast<std::ptrdiff_t>(offset + n))));
    offset += n;
  }
  return parts;
}

// ---------------------------------------------------------------------------
// IDX images (big-endian header, unsigned bytes)

namespace detail {

inline std::uint32_t read_be32(const std::string& b, std::size_t off) {
  if (off + 4 > b.size()) throw Error("idx: truncated header");
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3]));
}

}  // namespace detail

/// Image file (magic 0x00000803): one flattened image per row, scaled by 1/255.
inline Matrix parse_idx_images(const std::string& bytes) {
  if (detail::read_be32(bytes, 0) != 0x00000803u) throw Error("idx: not an image file");
  const auto n = detail::read_be32(bytes, 4);
  const auto h = detail::read_be32(bytes, 8);
  const auto w = detail::read_be32(bytes, 12);
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  if (bytes.size() < 16 + static_cast<std::size_t>(n) * pixels) throw Error("idx: truncated image data");
  Matrix X(n, static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * pixels; ++i) {
    X.data()[i] = static_cast<unsigned char>(bytes[16 + i]) / 255.0;
  }
  return X;
}

/// Label file (magic 0x00000801).
inline std::vector<int> parse_idx_labels(const std::string& bytes) {
  if (detail::read_be32(bytes, 0) != 0x00000801u) throw Error("idx: not a label file");
  const auto n = detail::read_be32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(n)) throw Error("idx: truncated label data");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<unsigned char>(bytes[8 + i]);
  return out;
}

// ---------------------------------------------------------------------------
// Model container
//
//   "CDE1" | u32 version | sections | u32 CRC32 of everything before it
//   section = 4-byte tag | u64 payload length | payload
//
// All integers and IEEE-754 doubles are little-endian.

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  std::uint32_t version = kModelFormatVersion;
  NetworkParams net;
  DensityParams density;
  Vector column_min;
  Vector column_max;
  Vector column_mean;  // training means in normalized units
  TrainConfig config;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_ += s; }
  void section(const char tag[4], const ByteWriter& body) {
    buf_.append(tag, 4);
    u64(body.buf_.size());
    buf_ += body.buf_;
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& b, std::size_t begin, std::size_t end) : b_(b), pos_(begin), end_(end) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw Error("model file: section overruns its length");
  }
  const std::string& b_;
  std::size_t pos_;
  std::size_t end_;
};

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

inline void write_vector(ByteWriter& w, const Vector& v) {
  w.u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

inline Vector read_vector(ByteReader& r) {
  const auto n = r.u64();
  if (n > (1ULL << 32)) throw Error("model file: implausible vector length");
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  return v;
}

}  // namespace detail

inline std::string serialize_model(const ModelFile& mf) {
  using detail::ByteWriter;
  ByteWriter out;
  out.bytes("CDE1");
  out.u32(mf.version);

  ByteWriter conf;
  conf.bytes(to_config_text(mf.config));
  out.section("CONF", conf);

  ByteWriter norm;
  detail::write_vector(norm, mf.column_min);
  detail::write_vector(norm, mf.column_max);
  detail::write_vector(norm, mf.column_mean);
  out.section("NORM", norm);

  ByteWriter netw;
  netw.f64(mf.net.bound_margin);
  netw.u64(mf.net.encoder.size());
  netw.u64(mf.net.decoder.size());
  for (std::size_t i = 0; i < mf.net.layer_count(); ++i) {
    const Layer& l = mf.net.layer(i);
    netw.u32(static_cast<std::uint32_t>(l.spec.in_width));
    netw.u32(static_cast<std::uint32_t>(l.spec.out_width));
    netw.u32(static_cast<std::uint32_t>(l.spec.activation));
    for (Eigen::Index j = 0; j < l.weight.size(); ++j) netw.f64(l.weight.data()[j]);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) netw.f64(l.bias(j));
  }
  out.section("NETW", netw);

  ByteWriter dens;
  dens.u32(static_cast<std::uint32_t>(mf.density.D));
  dens.u32(static_cast<std::uint32_t>(mf.density.K));
  dens.u32(static_cast<std::uint32_t>(mf.density.F));
  for (Eigen::Index f = 0; f < mf.density.lambda.size(); ++f) dens.f64(mf.density.lambda(f));
  for (double v : mf.density.coef_reals()) dens.f64(v);
  out.section("DENS", dens);

  std::string bytes = out.str();
  const std::uint32_t crc = detail::crc32_of(bytes.data(), bytes.size());
  ByteWriter tail;
  tail.u32(crc);
  return bytes + tail.str();
}

inline ModelFile deserialize_model(const std::string& bytes) {
  using detail::ByteReader;
  if (bytes.size() < 8 || bytes.compare(0, 4, "CDE1") != 0) throw Error("model file: bad magic (not a CDE1 file)");
  ModelFile mf;
  mf.version = ByteReader(bytes, 4, 8).u32();
  if (mf.version != kModelFormatVersion) {
    throw Error("model file: unsupported format version " + std::to_string(mf.version) + " (expected " +
                std::to_string(kModelFormatVersion) + ")");
  }
  if (bytes.size() < 12) throw Error("model file: checksum mismatch (file truncated)");
  const std::size_t body_end = bytes.size() - 4;
  const std::uint32_t stored = ByteReader(bytes, body_end, bytes.size()).u32();
  if (stored != detail::crc32_of(bytes.data(), body_end)) throw Error("model file: checksum mismatch");

  ByteReader r(bytes, 8, body_end);
  bool have_conf = false, have_norm = false, have_netw = false, have_dens = false;
  while (!r.done()) {
    const std::string tag = r.bytes(4);
    const auto len = r.u64();
    const std::size_t begin = r.pos();
    if (len > body_end - begin) throw Error("model file: section '" + tag + "' overruns the file");
    ByteReader s(bytes, begin, begin + static_cast<std::size_t>(len));
    r.bytes(static_cast<std::size_t>(len));
    if (tag == "CONF") {
      mf.config = parse_config_text(s.bytes(static_cast<std::size_t>(len)));
      have_conf = true;
    } else if (tag == "NORM") {
      mf.column_min = detail::read_vector(s);
      mf.column_max = detail::read_vector(s);
      mf.column_mean = detail::read_vector(s);
      have_norm = true;
    } else if (tag == "NETW") {
      mf.net.bound_margin = s.f64();
      const auto n_enc = s.u64();
      const auto n_dec = s.u64();
      if (n_enc > 1024 || n_dec > 1024) throw Error("model file: implausible layer count");
      for (std::uint64_t i = 0; i < n_enc + n_dec; ++i) {
        Layer l;
        l.spec.in_width = static_cast<int>(s.u32());
        l.spec.out_width = static_cast<int>(s.u32());
        const auto act = s.u32();
        if (act > static_cast<std::uint32_t>(Activation::bounded)) throw Error("model file: unknown activation");
        l.spec.activation = static_cast<Activation>(act);
        if (l.spec.in_width <= 0 || l.spec.out_width <= 0) throw Error("model file: bad layer width");
        l.weight.resize(l.spec.in_width, l.spec.out_width);
        for (Eigen::Index j = 0; j < l.weight.size(); ++j) l.weight.data()[j] = s.f64();
        l.bias.resize(l.spec.out_width);
        for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = s.f64();
        (i < n_enc ? mf.net.encoder : mf.net.decoder).push_back(std::move(l));
      }
      have_netw = true;
    } else if (tag == "DENS") {
      const auto D = static_cast<int>(s.u32());
      const auto K = static_cast<int>(s.u32());
      const auto F = static_cast<int>(s.u32());
      if (D < 1 || K < 0 || F < 1 || D > 100000 || K > 100000 || F > 100000) {
        throw Error("model file: bad density dimensions");
      }
      mf.density = DensityParams(D, K, F);
      for (int f = 0; f < F; ++f) mf.density.lambda(f) = s.f64();
      for (double& v : mf.density.coef_reals()) v = s.f64();
      have_dens = true;
    } else {
      throw Error("model file: unknown section '" + tag + "'");
    }
    if (!s.done()) throw Error("model file: section '" + tag + "' has trailing bytes");
  }
  if (!(have_conf && have_norm && have_netw && have_dens)) throw Error("model file: missing section");
  return mf;
}

inline void save_model(const std::string& path, const ModelFile& mf) { write_file(path, serialize_model(mf)); }

inline ModelFile load_model(const std::string& path) {
  try {
    return deserialize_model(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace cde
