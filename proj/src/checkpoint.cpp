#include "hypermeta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hypermeta {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'M', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void Checkpoint::add(std::string name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("checkpoint: duplicate array '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
}

void Checkpoint::add(const std::vector<Parameter*>& params, const std::string& prefix) {
  for (const Parameter* p : params) add(prefix + p->name, p->value);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("checkpoint: no array named '" + name + "'");
}

void Checkpoint::restore(const std::vector<Parameter*>& params, const std::string& prefix) const {
  for (Parameter* p : params) {
    const Tensor& t = get(prefix + p->name);
    if (t.shape() != p->value.shape())
      throw ShapeError("checkpoint: shape mismatch for '" + p->name + "'");
    p->value = t;
  }
}

std::string Checkpoint::serialize() const {
  nlohmann::json header;
  header["format"] = "hypermeta-checkpoint";
  header["version"] = 1;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Entry& e : entries_) {
    header["arrays"].push_back(
        {{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}, {"length", e.tensor.size()}});
    offset += e.tensor.size() * sizeof(double);
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  for (const Entry& e : entries_)
    out.append(reinterpret_cast<const char*>(e.tensor.data().data()), e.tensor.size() * sizeof(double));
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (16 + len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  const std::size_t base = 16 + len;
  Checkpoint ck;
  for (const auto& a : header.at("arrays")) {
    Shape shape = a.at("shape").get<Shape>();
    const std::size_t n = a.at("length").get<std::size_t>();
    const std::size_t off = a.at("offset").get<std::size_t>();
    if (shape_size(shape) != n) throw std::runtime_error("checkpoint: shape/length mismatch");
    if (base + off + n * sizeof(double) > bytes.size()) throw std::runtime_error("checkpoint: truncated data");
    std::vector<double> data(n);
    std::memcpy(data.data(), bytes.data() + base + off, n * sizeof(double));
    ck.add(a.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

}  // namespace hypermeta
