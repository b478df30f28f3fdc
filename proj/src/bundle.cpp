#include "earlycast/bundle.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "earlycast/error.hpp"

namespace earlycast {

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'C', 'B', 'U', 'N', 'D', 'L', 'E'};
constexpr std::uint32_t kVersion = 1;

using Header = std::map<std::string, std::string>;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void put_adam(Header& h, const AdamConfig& a) {
  h["adam_eta"] = fmt_double(a.eta);
  h["adam_beta1"] = fmt_double(a.beta1);
  h["adam_beta2"] = fmt_double(a.beta2);
  h["adam_epsilon"] = fmt_double(a.epsilon);
}

void put_info(Header& h, const TrainingInfo& info) {
  h["seed"] = std::to_string(info.seed);
  h["epochs_run"] = std::to_string(info.epochs_run);
  h["final_train_loss"] = fmt_double(info.final_train_loss);
  h["final_validation_loss"] = fmt_double(info.final_validation_loss);
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_file(const std::filesystem::path& path, const Header& header,
                const std::vector<std::pair<std::string, const Tensor*>>& arrays) {
  std::string text;
  for (const auto& [k, v] : header) text += k + "=" + v + "\n";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_pod(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, t] : arrays) {
      write_pod(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod(out, static_cast<std::uint32_t>(t->rank()));
      for (std::size_t d : t->shape()) write_pod(out, static_cast<std::uint64_t>(d));
      out.write(reinterpret_cast<const char*>(t->raw()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out) throw DataError("error while writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move bundle into place at " + path.string() + ": " + ec.message());
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot read " + path_);
  }

  template <typename T>
  T pod(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) fail(std::string("truncated while reading ") + what);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    if (n > (1u << 26)) fail(std::string("implausible length for ") + what);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) fail(std::string("truncated while reading ") + what);
    return s;
  }

  void read_doubles(double* dst, std::size_t n, const std::string& name) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) fail("truncated data for array " + name);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }

 private:
  std::string path_;
  std::ifstream in_;
};

struct Parsed {
  Header header;
  std::map<std::string, Tensor> arrays;
  std::vector<std::string> order;
};

Parsed parse(const std::filesystem::path& path) {
  Reader r(path);
  Parsed p;
  const std::string magic = r.bytes(sizeof kMagic, "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) r.fail("not a model bundle");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kVersion) r.fail("unsupported bundle version " + std::to_string(version));
  const std::string text = r.bytes(r.pod<std::uint32_t>("header length"), "header");
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("header line without '=': " + line);
    p.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.pod<std::uint32_t>("array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.pod<std::uint32_t>("name length"), "array name");
    const auto rank = r.pod<std::uint32_t>("rank");
    if (rank > 4) r.fail("array " + name + " has rank " + std::to_string(rank));
    Shape shape;
    std::size_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.pod<std::uint64_t>("dimension");
      if (dim == 0 || dim > (1u << 24)) r.fail("array " + name + " has dimension " + std::to_string(dim));
      shape.push_back(static_cast<std::size_t>(dim));
      size *= static_cast<std::size_t>(dim);
    }
    if (size > (1u << 26)) r.fail("array " + name + " is implausibly large");
    Tensor t(shape);
    r.read_doubles(t.raw(), t.size(), name);
    if (p.arrays.count(name)) r.fail("duplicate array " + name);
    p.order.push_back(name);
    p.arrays.emplace(std::move(name), std::move(t));
  }
  if (!r.at_end()) r.fail("trailing bytes after the last array");
  return p;
}

struct Fields {
  const Parsed& p;
  const std::string& path;

  const std::string& str(const std::string& key) const {
    const auto it = p.header.find(key);
    if (it == p.header.end()) throw DataError(path + ": header lacks " + key);
    return it->second;
  }
  std::size_t size(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(path + ": bad value for " + key + ": " + s);
    return v;
  }
  std::uint64_t u64(const std::string& key) const {
    const std::string& s = str(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(path + ": bad value for " + key + ": " + s);
    return v;
  }
  double real(const std::string& key) const {
    const std::string& s = str(key);
    // from_chars rejects "nan"; strtod accepts the %.17g spellings of nan/inf.
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty()) throw DataError(path + ": bad value for " + key + ": " + s);
    return v;
  }
  std::vector<std::size_t> list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(str(key));
    for (std::string item; std::getline(ss, item, ',');) {
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) throw DataError(path + ": bad list for " + key);
      out.push_back(v);
    }
    return out;
  }
  AdamConfig adam() const {
    return {real("adam_eta"), real("adam_beta1"), real("adam_beta2"), real("adam_epsilon")};
  }
  TrainingInfo info() const {
    return {u64("seed"), size("epochs_run"), real("final_train_loss"), real("final_validation_loss")};
  }
};

// Moves the arrays into the model's parameter slots, checking names, order and shapes.
void fill(Parsed& p, const std::string& path, const std::vector<std::pair<std::string, Tensor*>>& slots) {
  if (p.order.size() != slots.size()) {
    throw DataError(path + ": expected " + std::to_string(slots.size()) + " arrays, found " + std::to_string(p.order.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, dst] = slots[i];
    if (p.order[i] != name) throw DataError(path + ": array " + std::to_string(i) + " is " + p.order[i] + ", expected " + name);
    Tensor& src = p.arrays.at(name);
    if (src.shape() != dst->shape()) {
      throw DataError(path + ": array " + name + " has shape " + shape_string(src.shape()) + ", expected " +
                      shape_string(dst->shape()));
    }
    *dst = std::move(src);
    dst->set_requires_grad(true);
  }
}

std::vector<std::pair<std::string, Tensor*>> lstm_slots(LstmModel& m) {
  std::vector<std::pair<std::string, Tensor*>> s;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    s.push_back({p + "w", &m.layers[l].w});
    s.push_back({p + "u", &m.layers[l].u});
    s.push_back({p + "b", &m.layers[l].b});
  }
  if (m.config.has_classifier()) {
    s.push_back({"cls.w", &m.cls_w});
    s.push_back({"cls.b", &m.cls_b});
  }
  if (m.config.has_predictor()) {
    s.push_back({"pred.w", &m.pred_w});
    s.push_back({"pred.b", &m.pred_b});
  }
  return s;
}

std::vector<std::pair<std::string, Tensor*>> tcn_slots(TcnModel& m) {
  std::vector<std::pair<std::string, Tensor*>> s;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    s.push_back({p + "conv1.w", &b.conv1_w});
    s.push_back({p + "conv1.b", &b.conv1_b});
    s.push_back({p + "conv2.w", &b.conv2_w});
    s.push_back({p + "conv2.b", &b.conv2_b});
    if (b.has_downsample()) {
      s.push_back({p + "down.w", &b.down_w});
      s.push_back({p + "down.b", &b.down_b});
    }
  }
  s.push_back({"head.w", &m.head_w});
  s.push_back({"head.b", &m.head_b});
  return s;
}

template <typename M>
std::vector<std::pair<std::string, const Tensor*>> const_slots(const M& m,
                                                               std::vector<std::pair<std::string, Tensor*>> (*f)(M&)) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& [n, t] : f(const_cast<M&>(m))) out.push_back({n, t});
  return out;
}

}  // namespace

std::string LoadedBundle::variant() const {
  if (lstm) return std::string(variant_name(lstm->config.variant));
  if (tcn) return tcn->config.name;
  return "";
}

void save_bundle(const std::filesystem::path& path, const LstmModel& m) {
  const auto& c = m.config;
  Header h;
  h["format"] = "earlycast-bundle";
  h["family"] = "lstm";
  h["variant"] = std::string(variant_name(c.variant));
  h["input_features"] = std::to_string(c.input_features);
  h["hidden"] = std::to_string(c.hidden);
  h["layers"] = std::to_string(c.layers);
  h["output_dropout"] = fmt_double(c.output_dropout);
  h["recurrent_dropout"] = fmt_double(c.recurrent_dropout);
  h["epochs"] = std::to_string(c.epochs);
  h["full_batch"] = c.full_batch ? "1" : "0";
  h["forget_bias"] = fmt_double(c.forget_bias);
  put_adam(h, c.adam);
  put_info(h, m.info);
  write_file(path, h, const_slots(m, &lstm_slots));
}

void save_bundle(const std::filesystem::path& path, const TcnModel& m) {
  const auto& c = m.config;
  Header h;
  h["format"] = "earlycast-bundle";
  h["family"] = "tcn";
  h["variant"] = c.name;
  h["input_features"] = std::to_string(c.input_features);
  h["stacks"] = std::to_string(c.stacks);
  h["filters"] = std::to_string(c.filters);
  h["kernel_size"] = std::to_string(c.kernel_size);
  h["dilations"] = join(c.dilations);
  h["dropout"] = fmt_double(c.dropout);
  h["batch_size"] = std::to_string(c.batch_size);
  h["epochs"] = std::to_string(c.epochs);
  put_adam(h, c.adam);
  put_info(h, m.info);
  write_file(path, h, const_slots(m, &tcn_slots));
}

LoadedBundle load_bundle(const std::filesystem::path& path) {
  Parsed p = parse(path);
  const std::string ps = path.string();
  const Fields f{p, ps};
  if (f.str("format") != "earlycast-bundle") throw DataError(ps + ": unknown format " + f.str("format"));
  LoadedBundle out;
  Rng scratch(0);
  try {
    if (f.str("family") == "lstm") {
      const auto variant = parse_lstm_variant(f.str("variant"));
      if (!variant) throw DataError(ps + ": unknown LSTM variant " + f.str("variant"));
      LstmModelConfig c;
      c.variant = *variant;
      c.input_features = f.size("input_features");
      c.hidden = f.size("hidden");
      c.layers = f.size("layers");
      c.output_dropout = f.real("output_dropout");
      c.recurrent_dropout = f.real("recurrent_dropout");
      c.epochs = f.size("epochs");
      c.full_batch = f.str("full_batch") == "1";
      c.forget_bias = f.real("forget_bias");
      c.adam = f.adam();
      LstmModel m = build_model(c, scratch);
      m.info = f.info();
      fill(p, ps, lstm_slots(m));
      out.lstm = std::move(m);
    } else if (f.str("family") == "tcn") {
      TcnConfig c;
      c.name = f.str("variant");
      c.input_features = f.size("input_features");
      c.stacks = f.size("stacks");
      c.filters = f.size("filters");
      c.kernel_size = f.size("kernel_size");
      c.dilations = f.list("dilations");
      c.dropout = f.real("dropout");
      c.batch_size = f.size("batch_size");
      c.epochs = f.size("epochs");
      c.adam = f.adam();
      TcnModel m = build_tcn(c, scratch);
      m.info = f.info();
      fill(p, ps, tcn_slots(m));
      out.tcn = std::move(m);
    } else {
      throw DataError(ps + ": unknown model family " + f.str("family"));
    }
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(ps + ": " + e.what());
  }
  return out;
}

}  // namespace earlycast
