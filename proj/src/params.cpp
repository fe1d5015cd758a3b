#include "eqmesh/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace eqmesh {

Tensor& ParamStore::add_param(const std::string& name, Tensor t) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  entries_.push_back({name, std::move(t), true});
  return entries_.back().tensor;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor t) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_requires_grad(false);
  entries_.push_back({name, std::move(t), false});
  return entries_.back().tensor;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

namespace {
constexpr const char* kMagic = "EQMESH-CHECKPOINT 1";

void put_f64(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}
}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os << kMagic << '\n' << "count " << store.entries().size() << '\n';
    for (const auto& e : store.entries()) {
      os << e.name << ' ' << e.tensor.rank();
      for (auto d : e.tensor.shape()) os << ' ' << d;
      os << '\n';
    }
    os << "data\n";
    for (const auto& e : store.entries())
      for (double v : e.tensor.data()) put_f64(os, v);
    if (!os.flush()) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw std::runtime_error(path.string() + ": not an eqmesh checkpoint");
  std::size_t count = 0;
  {
    std::getline(is, line);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word >> count) || word != "count") throw std::runtime_error("checkpoint: bad count line");
  }
  if (count != store.entries().size())
    throw std::runtime_error("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                             std::to_string(store.entries().size()));
  for (auto& e : store.entries()) {
    std::getline(is, line);
    std::istringstream ls(line);
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) ls >> d;
    if (!ls || name != e.name || shape != e.tensor.shape())
      throw std::runtime_error("checkpoint entry '" + line + "' does not match model tensor " + e.name +
                               " " + shape_str(e.tensor.shape()));
  }
  if (!std::getline(is, line) || line != "data") throw std::runtime_error("checkpoint: missing data marker");
  for (auto& e : store.entries())
    for (auto& v : e.tensor.mutable_data()) v = get_f64(is);
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");
}

}  // namespace eqmesh
