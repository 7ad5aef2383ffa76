#include "bthick/datasets.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bthick/errors.hpp"

namespace bthick {

void Dataset::validate() const {
  require(!y.empty(), "Dataset: empty");
  require(x.rows() == y.size(), "Dataset: " + std::to_string(x.rows()) + " rows but " +
                                    std::to_string(y.size()) + " labels");
  require(num_classes >= 1, "Dataset: num_classes must be positive");
  for (auto label : y) require(label < num_classes, "Dataset: label out of range");
  if (bounds) require(bounds->first < bounds->second, "Dataset: empty bounds");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.bounds = bounds;
  out.x = Matrix(rows.size(), dim());
  out.y.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] < size(), "Dataset::subset: row out of range");
    auto src = x.row(rows[k]);
    std::copy(src.begin(), src.end(), out.x.row(k).begin());
    out.y.push_back(y[rows[k]]);
  }
  return out;
}

void ChessboardSpec::validate() const {
  require(grid >= 1, "ChessboardSpec: grid must be positive");
  require(points_per_square >= 1, "ChessboardSpec: points_per_square must be positive");
  require(square_len > 0.0, "ChessboardSpec: square_len must be positive");
  require(separation > 0.0, "ChessboardSpec: separation must be positive");
  require(z_shift >= 0.0, "ChessboardSpec: z_shift must be non-negative");
  require(pad_dim >= 3, "ChessboardSpec: pad_dim must be at least 3");
  require(pad_amplitude >= 0.0, "ChessboardSpec: pad_amplitude must be non-negative");
}

Dataset chessboard(const ChessboardSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  const std::size_t squares = spec.grid * spec.grid;
  const double pitch = spec.square_len + spec.separation;
  const double center_offset = 0.5 * static_cast<double>(spec.grid - 1);
  const double half = 0.5 * spec.square_len;

  Dataset d;
  d.num_classes = 2;
  d.x = Matrix(squares * spec.points_per_square, spec.pad_dim);
  d.y.reserve(d.x.rows());
  std::size_t row = 0;
  for (std::size_t gy = 0; gy < spec.grid; ++gy) {
    for (std::size_t gx = 0; gx < spec.grid; ++gx) {
      const double cx = (static_cast<double>(gx) - center_offset) * pitch;
      const double cy = (static_cast<double>(gy) - center_offset) * pitch;
      const double z = rng.next_bernoulli(0.5) ? spec.z_shift : -spec.z_shift;
      const std::size_t label = (gx + gy) % 2;
      for (std::size_t p = 0; p < spec.points_per_square; ++p, ++row) {
        auto r = d.x.row(row);
        r[0] = rng.next_uniform(cx - half, cx + half);
        r[1] = rng.next_uniform(cy - half, cy + half);
        r[kChessboardShiftAxis] = z;
        for (std::size_t c = 3; c < spec.pad_dim; ++c)
          r[c] = spec.pad_amplitude > 0.0
                     ? rng.next_uniform(-spec.pad_amplitude, spec.pad_amplitude)
                     : 0.0;
        d.y.push_back(label);
      }
    }
  }
  return d;
}

Dataset flip_chessboard_shift(const Dataset& data) {
  require(data.dim() > kChessboardShiftAxis, "flip_chessboard_shift: data has no shift axis");
  Dataset out = data;
  for (std::size_t r = 0; r < out.size(); ++r) {
    double& z = out.x(r, kChessboardShiftAxis);
    z = 0.0 - z;
  }
  return out;
}

Dataset gaussian_blobs(const std::vector<Vector>& centers, double sigma, std::size_t n_per_class,
                       std::uint64_t seed) {
  require(!centers.empty(), "gaussian_blobs: no centers");
  require(sigma >= 0.0, "gaussian_blobs: negative sigma");
  const std::size_t dim = centers.front().size();
  for (std::size_t a = 0; a < centers.size(); ++a) {
    require(centers[a].size() == dim, "gaussian_blobs: centers differ in dimension");
    for (std::size_t b = 0; b < a; ++b)
      require(centers[a] != centers[b], "gaussian_blobs: centers must be distinct");
  }
  RngStream rng(seed);
  Dataset d;
  d.num_classes = centers.size();
  d.x = Matrix(centers.size() * n_per_class, dim);
  std::size_t row = 0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t c = 0; c < dim; ++c) d.x(row, c) = centers[k][c] + sigma * rng.next_normal();
      d.y.push_back(k);
    }
  }
  return d;
}

Corruption parse_corruption(const std::string& text) {
  const auto colon = text.find(':');
  require(colon != std::string::npos, "corruption must look like kind:value, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  double value = 0.0;
  try {
    value = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ContractViolation("corruption value is not a number: '" + text + "'");
  }
  if (kind == "gaussian_noise") return GaussianNoise{value};
  if (kind == "uniform_noise") return UniformNoise{value};
  if (kind == "coordinate_dropout") return CoordinateDropout{value};
  if (kind == "saturation") return Saturation{value};
  throw ContractViolation("unknown corruption kind '" + kind + "'");
}

std::string corruption_label(const Corruption& kind) {
  std::ostringstream os;
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GaussianNoise>) os << "gaussian_noise:" << k.sigma;
        if constexpr (std::is_same_v<T, UniformNoise>) os << "uniform_noise:" << k.amplitude;
        if constexpr (std::is_same_v<T, CoordinateDropout>) os << "coordinate_dropout:" << k.p;
        if constexpr (std::is_same_v<T, Saturation>) os << "saturation:" << k.s;
      },
      kind);
  return os.str();
}

Dataset corrupt(const Dataset& data, const Corruption& kind, std::uint64_t seed) {
  RngStream rng(seed);
  Dataset out = data;
  auto values = out.x.values();
  if (const auto* g = std::get_if<GaussianNoise>(&kind)) {
    require(g->sigma >= 0.0, "gaussian_noise: sigma must be non-negative");
    if (g->sigma > 0.0)
      for (double& v : values) v += g->sigma * rng.next_normal();
  } else if (const auto* u = std::get_if<UniformNoise>(&kind)) {
    require(u->amplitude >= 0.0, "uniform_noise: amplitude must be non-negative");
    if (u->amplitude > 0.0)
      for (double& v : values) v += rng.next_uniform(-u->amplitude, u->amplitude);
  } else if (const auto* c = std::get_if<CoordinateDropout>(&kind)) {
    require(c->p >= 0.0 && c->p <= 1.0, "coordinate_dropout: p must lie in [0, 1]");
    if (c->p > 0.0)
      for (double& v : values)
        if (rng.next_bernoulli(c->p)) v = 0.0;
  } else {
    const double s = std::get<Saturation>(kind).s;
    require(s > 0.0, "saturation: s must be positive");
    if (s != 2.0) {
      const double power = 2.0 / s;
      for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.x.row(r);
        const double before = l2_norm(row);
        if (before == 0.0) continue;
        for (double& v : row) v = std::copysign(std::pow(std::abs(v), power), v);
        const double after = l2_norm(row);
        if (after == 0.0) continue;
        const double scale = before / after;
        for (double& v : row) v *= scale;
      }
    }
  }
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "train_test_split: fraction must lie in (0, 1)");
  RngStream rng(seed);
  const auto perm = permutation(rng, data.size());
  const auto n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(data.size()) * (1.0 - test_fraction)));
  require(n_train > 0 && n_train < data.size(), "train_test_split: a split would be empty");
  std::span<const std::size_t> all(perm);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream os;
  for (std::size_t c = 0; c < data.dim(); ++c) os << 'f' << c << ',';
  os << "label\n";
  char buf[64];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (double v : data.x.row(r)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      os.write(buf, res.ptr - buf);
      os << ',';
    }
    os << data.y[r] << '\n';
  }
  return os.str();
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset CSV: missing header");
  std::size_t columns = 1;
  for (char ch : line) columns += ch == ',';
  if (columns < 2 || line.substr(line.rfind(',') + 1) != "label")
    throw IoError("dataset CSV: header must end with a 'label' column");
  const std::size_t dim = columns - 1;
  std::vector<double> values;
  Dataset d;
  std::size_t line_no = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t c = 0; c < dim; ++c) {
      double v;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',')
        throw IoError("dataset CSV: bad value on line " + std::to_string(line_no));
      values.push_back(v);
      p = res.ptr + 1;
    }
    std::size_t label;
    auto res = std::from_chars(p, end, label);
    if (res.ec != std::errc() || res.ptr != end)
      throw IoError("dataset CSV: bad label on line " + std::to_string(line_no));
    d.y.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (d.y.empty()) throw IoError("dataset CSV: no rows");
  d.x = Matrix(d.y.size(), dim, std::move(values));
  d.num_classes = max_label + 1;
  return d;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << dataset_to_csv(data);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_csv(ss.str());
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), "accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace bthick
