#include "dancecam/nn/optim.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dancecam/core/types.hpp"

namespace dancecam::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

Adam::Adam(const ParameterSet& ps, AdamConfig cfg) : cfg_(cfg) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    m_.push_back(Matrix::Zero(ps[i].value.rows(), ps[i].value.cols()));
    v_.push_back(Matrix::Zero(ps[i].value.rows(), ps[i].value.cols()));
  }
}

void Adam::step(ParameterSet& ps, const Gradients& grads, double lr_scale) {
  ++t_;
  double clip = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const double norm = std::sqrt(grads.squaredNorm());
    if (norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
  }
  const double lr = cfg_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix g = clip * grads.g[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Matrix& w = ps[i].value;
    if (cfg_.weight_decay > 0.0) w *= (1.0 - lr * cfg_.weight_decay);
    w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

double cosineSchedule(long step, long total, double floor) {
  if (total <= 0) return 1.0;
  const double x = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

namespace {

constexpr char kMagic[8] = {'D', 'C', 'A', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void writePod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T readPod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint: truncated file");
  return v;
}

nlohmann::json readHeader(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = readPod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  (void)readPod<std::uint32_t>(is);
  const auto len = readPod<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("checkpoint: truncated header");
  return nlohmann::json::parse(text);
}

}  // namespace

void saveCheckpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                    const ParameterSet& ps) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ps.size(); ++i)
    header["tensors"].push_back({{"name", ps[i].name}, {"rows", ps[i].value.rows()},
                                 {"cols", ps[i].value.cols()}});
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
  os.write(kMagic, 8);
  writePod<std::uint32_t>(os, kCheckpointVersion);
  writePod<std::uint32_t>(os, 0);
  writePod<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < ps.size(); ++i)
    os.write(reinterpret_cast<const char*>(ps[i].value.data()),
             static_cast<std::streamsize>(sizeof(double) * ps[i].value.size()));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

nlohmann::json readCheckpointMeta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return readHeader(is).at("meta");
}

nlohmann::json loadCheckpoint(const std::filesystem::path& path, ParameterSet& ps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const nlohmann::json header = readHeader(is);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != ps.size()) throw FormatError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = tensors[i];
    Matrix& m = ps[i].value;
    if (t.at("name").get<std::string>() != ps[i].name || t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols())
      throw FormatError("checkpoint: tensor " + ps[i].name + " does not match the model");
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is) throw FormatError("checkpoint: truncated tensor data");
  }
  return header.at("meta");
}

}  // namespace dancecam::nn
