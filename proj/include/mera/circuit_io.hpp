#pragma once
// Circuit files: a directory holding manifest.json plus one tensor container
// per gate and one for the top state.
//
//   {"format": "mera-circuit", "version": 1, "geometry": "binary", "n": 16,
//    "chi": 2, "top_sites": 2, "top": "top.tns",
//    "layers": [{"level": 1, "lattice": 16,
//                "disentanglers": [{"sites": [1, 2], "file": "L1_u0.tns"}, ...],
//                "isometries":    [{"sites": [0, 1], "file": "L1_v0.tns"}, ...]}, ...]}
//
// Loading rebuilds every layer through make_layer, so gate placement and
// unitarity are re-validated against the geometry.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mera/circuit.hpp"
#include "mera/tensor_io.hpp"

namespace mera {

inline void save_circuit(const std::filesystem::path& dir, const MeraCircuit& c) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "mera-circuit";
  m["version"] = 1;
  m["geometry"] = to_string(c.geometry);
  m["n"] = c.n;
  m["chi"] = c.chi;
  m["top_sites"] = c.top_sites;
  m["layers"] = nlohmann::json::array();
  for (const Layer& l : c.layers) {
    nlohmann::json lj;
    lj["level"] = l.level;
    lj["lattice"] = l.lattice;
    for (const char* kind : {"disentanglers", "isometries"}) {
      const bool u = std::string(kind) == "disentanglers";
      const auto& gates = u ? l.disentanglers : l.isometries;
      lj[kind] = nlohmann::json::array();
      for (std::size_t j = 0; j < gates.size(); ++j) {
        const std::string file = "L" + std::to_string(l.level) + (u ? "_u" : "_v") + std::to_string(j) + ".tns";
        save_tensor(dir / file, gates[j].unitary);
        lj[kind].push_back({{"sites", gates[j].sites}, {"file", file}});
      }
    }
    m["layers"].push_back(lj);
  }
  if (c.top) {
    save_tensor(dir / "top.tns", *c.top);
    m["top"] = "top.tns";
  } else {
    m["top"] = nullptr;
  }
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << m.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

inline MeraCircuit load_circuit(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ValidationError("no circuit manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("circuit manifest: " + std::string(e.what()));
  }
  if (m.value("format", "") != "mera-circuit" || m.value("version", 0) != 1)
    throw ValidationError("circuit manifest: not a version-1 mera-circuit file");
  try {
    MeraCircuit c;
    c.geometry = geometry_from_string(m.at("geometry").get<std::string>());
    c.n = m.at("n").get<std::size_t>();
    c.chi = m.at("chi").get<std::size_t>();
    c.top_sites = m.at("top_sites").get<std::size_t>();
    const auto shape = decompose(c.n, c.geometry);
    if (shape.top_sites != c.top_sites || m.at("layers").size() != shape.layers)
      throw ValidationError("circuit manifest: layer count or top size inconsistent with n = " + std::to_string(c.n));
    std::size_t L = c.n;
    for (const auto& lj : m.at("layers")) {
      const std::size_t level = lj.at("level").get<std::size_t>();
      if (level != c.layers.size() + 1 || lj.at("lattice").get<std::size_t>() != L)
        throw ValidationError("circuit manifest: layers out of order");
      std::vector<CMatrix> us, vs;
      for (const auto& g : lj.at("disentanglers")) us.push_back(to_matrix(load_tensor(dir / g.at("file").get<std::string>()).tensor));
      for (const auto& g : lj.at("isometries")) vs.push_back(to_matrix(load_tensor(dir / g.at("file").get<std::string>()).tensor));
      Layer layer = make_layer(c.geometry, level, L, us, vs);
      for (std::size_t j = 0; j < us.size(); ++j)
        if (lj.at("disentanglers")[j].at("sites").get<std::vector<std::size_t>>() != layer.disentanglers[j].sites ||
            lj.at("isometries")[j].at("sites").get<std::vector<std::size_t>>() != layer.isometries[j].sites)
          throw ValidationError("circuit manifest: gate sites of layer " + std::to_string(level) +
                                " do not match the geometry");
      c.layers.push_back(std::move(layer));
      L /= arity(c.geometry);
    }
    if (!m.at("top").is_null()) {
      CTensor top = load_tensor(dir / m.at("top").get<std::string>()).tensor;
      if (top.rank() != 1 || top.size() != (std::size_t{1} << c.top_sites))
        throw ValidationError("circuit manifest: top state has the wrong dimension");
      c.top = std::move(top);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("circuit manifest: " + std::string(e.what()));
  }
}

}  // namespace mera
