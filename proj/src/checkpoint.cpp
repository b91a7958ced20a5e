#include "flowsac/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowsac/errors.hpp"

namespace flowsac {

namespace {

using nlohmann::json;

constexpr char kFormatName[] = "flowsac-checkpoint";
constexpr int kFormatVersion = 1;
constexpr char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const unsigned char* bytes, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    const unsigned b0 = bytes[i];
    const unsigned b1 = i + 1 < n ? bytes[i + 1] : 0;
    const unsigned b2 = i + 2 < n ? bytes[i + 2] : 0;
    out += kBase64Alphabet[b0 >> 2];
    out += kBase64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)];
    out += i + 1 < n ? kBase64Alphabet[((b1 & 0xf) << 2) | (b2 >> 6)] : '=';
    out += i + 2 < n ? kBase64Alphabet[b2 & 0x3f] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0)
    throw io_error("base64: length must be a multiple of 4");
  // Inverse alphabet; 0xff marks invalid characters.
  unsigned char inv[256];
  for (int i = 0; i < 256; ++i) inv[i] = 0xff;
  for (int i = 0; i < 64; ++i)
    inv[static_cast<unsigned char>(kBase64Alphabet[i])] =
        static_cast<unsigned char>(i);

  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    unsigned vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        // Padding may only appear in the last one or two positions.
        if (i + 4 != text.size() || k < 2)
          throw io_error("base64: misplaced padding");
        ++pad;
        vals[k] = 0;
        continue;
      }
      if (pad > 0 || inv[static_cast<unsigned char>(c)] == 0xff)
        throw io_error("base64: invalid character");
      vals[k] = inv[static_cast<unsigned char>(c)];
    }
    out.push_back(static_cast<unsigned char>((vals[0] << 2) | (vals[1] >> 4)));
    if (pad < 2)
      out.push_back(
          static_cast<unsigned char>(((vals[1] & 0xf) << 4) | (vals[2] >> 2)));
    if (pad < 1)
      out.push_back(
          static_cast<unsigned char>(((vals[2] & 0x3) << 6) | vals[3]));
  }
  return out;
}

std::string encode_doubles(const double* values, std::size_t n) {
  std::vector<unsigned char> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(values[i]);
    for (int k = 0; k < 8; ++k)
      bytes[i * 8 + k] = static_cast<unsigned char>((u >> (8 * k)) & 0xff);
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<double> decode_doubles(const std::string& text) {
  const std::vector<unsigned char> bytes = base64_decode(text);
  if (bytes.size() % 8 != 0)
    throw io_error("tensor payload is not a whole number of float64s");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k)
      u |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", encode_doubles(m.data(), m.size())}};
}

Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
      !j.contains("data"))
    throw io_error(std::string(what) + ": expected {rows, cols, data}");
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  const std::vector<double> vals =
      decode_doubles(j.at("data").get<std::string>());
  if (vals.size() != rows * cols)
    throw io_error(std::string(what) + ": payload size does not match shape");
  return Matrix::of(rows, cols, vals);
}

json vector_to_json(const Vector& v) {
  return json{{"dim", v.dim()}, {"data", encode_doubles(v.data(), v.dim())}};
}

Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("data"))
    throw io_error(std::string(what) + ": expected {dim, data}");
  const std::size_t dim = j.at("dim").get<std::size_t>();
  std::vector<double> vals = decode_doubles(j.at("data").get<std::string>());
  if (vals.size() != dim)
    throw io_error(std::string(what) + ": payload size does not match shape");
  return Vector::of(std::move(vals));
}

json net_to_json(const MlpParams& net) {
  json layers = json::array();
  for (const MlpLayer& l : net.layers)
    layers.push_back(json{{"w", matrix_to_json(l.w)}, {"b", vector_to_json(l.b)}});
  return json{{"activation", "tanh"}, {"layers", std::move(layers)}};
}

MlpParams net_from_json(const json& j) {
  if (!j.is_object() || !j.contains("activation") || !j.contains("layers"))
    throw io_error("network: expected {activation, layers}");
  if (j.at("activation").get<std::string>() != "tanh")
    throw io_error("network: unsupported activation \"" +
                   j.at("activation").get<std::string>() + "\"");
  MlpParams net;
  for (const json& lj : j.at("layers")) {
    MlpLayer layer;
    layer.w = matrix_from_json(lj.at("w"), "layer weight");
    layer.b = vector_from_json(lj.at("b"), "layer bias");
    if (layer.w.rows() != layer.b.dim())
      throw io_error("network: weight rows disagree with bias length");
    net.layers.push_back(std::move(layer));
  }
  if (net.layers.empty()) throw io_error("network: no layers");
  return net;
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open \"" + path + "\" for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw io_error("write to \"" + path + "\" failed");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    throw io_error("\"" + path + "\" is not valid JSON");
  return doc;
}

json checkpoint_header(const char* kind, std::size_t episode) {
  return json{{"format", kFormatName},
              {"version", kFormatVersion},
              {"kind", kind},
              {"episode", episode}};
}

}  // namespace

void save_flow_checkpoint(const std::string& path, const FlowPolicy& policy,
                          std::size_t episode) {
  validate_flow_policy(policy);
  json doc = checkpoint_header("flow", episode);
  doc["flow"] = json{{"state_dim", policy.state_dim},
                     {"action_dim", policy.action_dim},
                     {"ode_steps", policy.ode_steps},
                     {"net", net_to_json(policy.net)}};
  write_json_file(path, doc);
}

void save_gaussian_checkpoint(const std::string& path, const Matrix& K,
                              const Matrix& sigma, std::size_t episode) {
  if (sigma.rows() != sigma.cols() || K.rows() != sigma.rows())
    throw std::invalid_argument(
        "gaussian checkpoint: K must be action x state and sigma square "
        "with matching action dimension");
  json doc = checkpoint_header("gaussian", episode);
  doc["gaussian"] = json{{"K", matrix_to_json(K)},
                         {"sigma", matrix_to_json(sigma)}};
  write_json_file(path, doc);
}

Checkpoint load_checkpoint(const std::string& path) {
  const json doc = read_json_file(path);
  try {
    if (!doc.is_object() || doc.value("format", "") != kFormatName)
      throw io_error("\"" + path + "\" is not a " + kFormatName + " file");
    if (doc.value("version", -1) != kFormatVersion)
      throw io_error("unsupported checkpoint version in \"" + path + "\"");

    Checkpoint ckpt;
    ckpt.episode = doc.value("episode", std::size_t{0});
    const std::string kind = doc.value("kind", "");
    if (kind == "flow") {
      const json& fj = doc.at("flow");
      FlowPolicy policy;
      policy.state_dim = fj.at("state_dim").get<std::size_t>();
      policy.action_dim = fj.at("action_dim").get<std::size_t>();
      policy.ode_steps = fj.at("ode_steps").get<int>();
      policy.net = net_from_json(fj.at("net"));
      validate_flow_policy(policy);
      ckpt.policy = std::move(policy);
    } else if (kind == "gaussian") {
      const json& gj = doc.at("gaussian");
      GaussianCheckpointData g;
      g.K = matrix_from_json(gj.at("K"), "gaussian K");
      g.sigma = matrix_from_json(gj.at("sigma"), "gaussian sigma");
      if (g.sigma.rows() != g.sigma.cols() || g.K.rows() != g.sigma.rows())
        throw io_error("gaussian checkpoint has inconsistent shapes");
      ckpt.policy = std::move(g);
    } else {
      throw io_error("unknown checkpoint kind \"" + kind + "\"");
    }
    return ckpt;
  } catch (const json::exception& e) {
    // Missing or mistyped fields surface as io errors naming the file.
    throw io_error("malformed checkpoint \"" + path + "\": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw io_error("malformed checkpoint \"" + path + "\": " + e.what());
  }
}

}  // namespace flowsac
