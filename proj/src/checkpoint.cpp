#include "geoclr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "geoclr/common.hpp"

namespace geoclr {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'O', 'C', 'L', 'R', 'C', 'K'};
const std::string kMomentPrefix = "adam.m.";
const std::string kSecondPrefix = "adam.v.";

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void corrupt(const std::string& what) const {
    throw DataError("corrupt checkpoint " + path_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) corrupt("unexpected end of file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_container(const std::string& path, const Container& container) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint8_t>(out, kContainerVersion);
  const std::string cfg = container.config.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& [name, t] : container.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.values) put<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  Reader in(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()), path);
  if (in.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) in.corrupt("bad magic");
  const auto version = in.get<std::uint8_t>();
  if (version != kContainerVersion)
    throw DataError("checkpoint " + path + ": version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kContainerVersion) + ")");
  Container c;
  const auto cfg_len = in.get<std::uint32_t>();
  try {
    c.config = nlohmann::json::parse(in.bytes(cfg_len));
  } catch (const nlohmann::json::parse_error&) {
    in.corrupt("config block is not valid JSON");
  }
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    if (name_len > 4096) in.corrupt("implausible tensor name length");
    std::string name = in.bytes(name_len);
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) in.corrupt("implausible tensor rank");
    std::vector<int> shape;
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint64_t>();
      if (d > (1u << 30)) in.corrupt("implausible tensor dimension");
      shape.push_back(static_cast<int>(d));
      n *= d;
    }
    if (n > (1ull << 32)) in.corrupt("implausible tensor size");
    Tensor t(shape);
    for (auto& v : t.values) v = in.get<double>();
    if (!c.tensors.emplace(std::move(name), std::move(t)).second) in.corrupt("duplicate tensor name");
  }
  if (!in.done()) in.corrupt("trailing bytes");
  return c;
}

Container encoder_to_container(const TrainedEncoder& encoder) {
  Container c;
  c.config["kind"] = "encoder";
  c.config["encoder"] = encoder.config.to_json();
  c.config["optimizer"] = encoder.optimizer.settings.to_json();
  c.config["optimizer"]["step"] = encoder.optimizer.step;
  c.config["run"] = encoder.run_config;
  c.tensors = encoder.params;
  for (const auto& [name, t] : encoder.optimizer.first_moment) c.tensors[kMomentPrefix + name] = t;
  for (const auto& [name, t] : encoder.optimizer.second_moment) c.tensors[kSecondPrefix + name] = t;
  return c;
}

TrainedEncoder encoder_from_container(const Container& c) {
  if (!c.config.contains("encoder")) throw DataError("checkpoint has no encoder block");
  TrainedEncoder e;
  e.config = EncoderConfig::from_json(c.config.at("encoder"));
  try {
    e.config.validate();
  } catch (const UsageError& err) {
    throw DataError(std::string("checkpoint violates encoder invariants: ") + err.what());
  }
  if (c.config.contains("optimizer")) {
    e.optimizer.settings = OptimizerSettings::from_json(c.config.at("optimizer"));
    e.optimizer.step = c.config.at("optimizer").value("step", std::int64_t{0});
  }
  if (c.config.contains("run")) e.run_config = c.config.at("run");
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind(kMomentPrefix, 0) == 0)
      e.optimizer.first_moment[name.substr(kMomentPrefix.size())] = t;
    else if (name.rfind(kSecondPrefix, 0) == 0)
      e.optimizer.second_moment[name.substr(kSecondPrefix.size())] = t;
    else
      e.params[name] = t;
  }
  const Parameters expected = init_encoder(e.config, 0);
  for (const auto& [name, t] : expected) {
    auto it = e.params.find(name);
    if (it == e.params.end()) throw DataError("checkpoint missing parameter '" + name + "'");
    if (it->second.shape != t.shape) throw DataError("checkpoint parameter '" + name + "' has wrong shape");
  }
  return e;
}

void save_checkpoint(const std::string& path, const TrainedEncoder& encoder) {
  write_container(path, encoder_to_container(encoder));
}

TrainedEncoder load_checkpoint(const std::string& path) { return encoder_from_container(read_container(path)); }

}  // namespace geoclr
