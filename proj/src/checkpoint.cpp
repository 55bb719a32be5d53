#include "ldct/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ldct/error.hpp"

namespace ldct::checkpoint {
namespace {

constexpr char kMagic[4] = {'L', 'D', 'C', 'K'};

bool valid_token(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\n' || c == '\t'; });
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  if (text == "scalar") return s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    require(!part.empty() && part.find_first_not_of("0123456789") == std::string::npos, ErrorKind::kFormat,
            "checkpoint: bad shape '" + text + "'");
    s.push_back(std::stoull(part));
  }
  return s;
}

std::string format_shape(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void Container::set_meta(const std::string& key, const std::string& value) {
  require(valid_token(key) && value.find('\n') == std::string::npos, ErrorKind::kInvalidArgument,
          "checkpoint: meta key must be one token and value one line");
  for (auto& [k, v] : meta_)
    if (k == key) {
      v = value;
      return;
    }
  meta_.emplace_back(key, value);
}

bool Container::has_meta(const std::string& key) const {
  return std::any_of(meta_.begin(), meta_.end(), [&](const auto& kv) { return kv.first == key; });
}

const std::string& Container::meta(const std::string& key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  fail(ErrorKind::kFormat, "checkpoint: missing meta entry '" + key + "'");
}

void Container::add(const std::string& name, const Array& value) {
  require(valid_token(name), ErrorKind::kInvalidArgument, "checkpoint: tensor name must be one token");
  require(!contains(name), ErrorKind::kInvalidArgument, "checkpoint: duplicate tensor " + name);
  tensors_.push_back({name, value});
}

bool Container::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
}

const Array& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t.value;
  fail(ErrorKind::kShape, "checkpoint: missing tensor " + name);
}

void Container::add_tree(const std::string& prefix, const ParamTree& tree) {
  for (const auto& e : tree.entries()) add(prefix + e.name, e.var.value());
}

void Container::load_tree(const std::string& prefix, ParamTree& tree) const {
  std::size_t expected = 0;
  for (const auto& t : tensors_)
    if (t.name.starts_with(prefix)) ++expected;
  require(expected == tree.size(), ErrorKind::kShape,
          "checkpoint: '" + prefix + "' holds " + std::to_string(expected) + " tensors, model expects " +
              std::to_string(tree.size()));
  for (auto& e : tree.entries()) {
    const auto& stored = tensor(prefix + e.name);
    require(stored.same_shape(e.var.value()), ErrorKind::kShape,
            "checkpoint: " + prefix + e.name + " has shape " + shape_string(stored.shape()) + ", model expects " +
                shape_string(e.var.shape()));
    e.var.mutable_value() = stored;
  }
}

std::vector<std::uint8_t> Container::encode() const {
  std::ostringstream manifest;
  for (const auto& [k, v] : meta_) manifest << "meta " << k << ' ' << v << '\n';
  std::uint64_t offset = 0;
  for (const auto& t : tensors_) {
    manifest << "tensor " << t.name << ' ' << format_shape(t.value.shape()) << ' ' << offset << '\n';
    offset += 4 * t.value.size();
  }
  const std::string text = manifest.str();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : tensors_)
    for (double v : t.value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Container Container::decode(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::kFormat,
          "checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  require(version == kVersion, ErrorKind::kFormat, "checkpoint: unsupported version " + std::to_string(version));
  const auto text_size = get_le<std::uint64_t>(bytes.data() + 8);
  require(text_size <= bytes.size() - 16, ErrorKind::kTruncated, "checkpoint: manifest truncated");
  const std::string text(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(text_size));
  const std::uint8_t* payload = bytes.data() + 16 + text_size;
  const std::size_t payload_size = bytes.size() - 16 - text_size;

  Container c;
  std::istringstream in(text);
  std::string line;
  std::uint64_t expected_offset = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("meta ")) {
      const auto space = line.find(' ', 5);
      require(space != std::string::npos, ErrorKind::kFormat, "checkpoint: bad meta line");
      c.meta_.emplace_back(line.substr(5, space - 5), line.substr(space + 1));
      continue;
    }
    std::istringstream fields(line);
    std::string kind, name, shape_text;
    std::uint64_t offset = 0;
    require(static_cast<bool>(fields >> kind >> name >> shape_text >> offset) && kind == "tensor", ErrorKind::kFormat,
            "checkpoint: bad manifest line '" + line + "'");
    require(offset == expected_offset, ErrorKind::kFormat, "checkpoint: non-contiguous offset for " + name);
    Array value(parse_shape(shape_text));
    require(offset + 4 * value.size() <= payload_size, ErrorKind::kTruncated, "checkpoint: payload truncated at " + name);
    for (std::size_t i = 0; i < value.size(); ++i)
      value[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload + offset + 4 * i));
    expected_offset = offset + 4 * value.size();
    c.tensors_.push_back({name, std::move(value)});
  }
  require(expected_offset == payload_size, ErrorKind::kDimension, "checkpoint: trailing payload bytes");
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace ldct::checkpoint
