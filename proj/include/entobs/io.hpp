#pragma once

// JSON serialization for states, covers, cochains, witnesses, marginal
// instances, infeasibility certificates, and pure patch families, plus the
// FNV-1a digest used to stamp inputs into reports.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entobs/cech.hpp"
#include "entobs/core.hpp"
#include "entobs/marginal.hpp"
#include "entobs/pure.hpp"
#include "entobs/witness.hpp"

namespace entobs::io {

using json = nlohmann::ordered_json;

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string digest_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// low-level pieces

inline json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c)
      row.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const json& j) {
  require(j.is_array() && !j.empty(), Err::ParseError,
          "matrix data must be a nonempty array of rows");
  const long rows = static_cast<long>(j.size());
  const long cols = static_cast<long>(j[0].size());
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    require(static_cast<long>(j[static_cast<size_t>(r)].size()) == cols,
            Err::ParseError, "ragged matrix data");
    for (long c = 0; c < cols; ++c) {
      const json& e = j[static_cast<size_t>(r)][static_cast<size_t>(c)];
      require(e.is_array() && e.size() == 2, Err::ParseError,
              "matrix entries must be [re, im] pairs");
      m(r, c) = cxd(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

inline json vector_to_json(const Vec& v) {
  json out = json::array();
  for (long i = 0; i < v.size(); ++i)
    out.push_back(json::array({v(i).real(), v(i).imag()}));
  return out;
}

inline Vec vector_from_json(const json& j) {
  require(j.is_array() && !j.empty(), Err::ParseError,
          "vector data must be a nonempty array");
  Vec v(static_cast<long>(j.size()));
  for (long i = 0; i < v.size(); ++i) {
    const json& e = j[static_cast<size_t>(i)];
    require(e.is_array() && e.size() == 2, Err::ParseError,
            "vector entries must be [re, im] pairs");
    v(i) = cxd(e[0].get<double>(), e[1].get<double>());
  }
  return v;
}

inline std::vector<int> ints_from_json(const json& j) {
  require(j.is_array(), Err::ParseError, "expected an integer array");
  std::vector<int> out;
  for (const auto& e : j) out.push_back(e.get<int>());
  return out;
}

// ---------------------------------------------------------------------------
// state files

struct StateFile {
  SiteSystem sys;
  Subsystem support;
  std::string kind;  // density | pure | herm
  Mat data;          // density/herm
  Vec vec;           // pure

  DensityOp density() const {
    if (kind == "pure") return PureVec(support, vec).to_density();
    require(kind == "density", Err::ParseError,
            "state kind is not density or pure");
    return DensityOp(support, data);
  }
  HermOp herm() const {
    if (kind == "pure") return PureVec(support, vec).to_density();
    return HermOp(support, data);
  }
  PureVec pure() const {
    require(kind == "pure", Err::ParseError, "state kind is not pure");
    return PureVec(support, vec);
  }
};

inline StateFile read_state(const json& j) {
  require(j.is_object(), Err::ParseError, "state must be a JSON object");
  require(j.contains("sites") && j.contains("data"), Err::ParseError,
          "state needs sites and data");
  SiteSystem sys(ints_from_json(j.at("sites")));
  std::vector<int> supp =
      j.contains("support") ? ints_from_json(j.at("support")) : sys.all_sites();
  Subsystem sub(sys, supp);
  std::string kind = j.value("kind", std::string("density"));
  if (kind == "pure") {
    Vec v = vector_from_json(j.at("data"));
    require(v.size() == sub.dim(), Err::ParseError,
            "pure state length does not match its support");
    return StateFile{sys, sub, kind, Mat(), std::move(v)};
  }
  require(kind == "density" || kind == "herm", Err::ParseError,
          "state kind must be density, pure, or herm");
  Mat m = matrix_from_json(j.at("data"));
  return StateFile{sys, sub, kind, std::move(m), Vec()};
}

inline json write_state(const HermOp& op, const std::string& kind = "herm") {
  json j;
  j["sites"] = op.support().system().dims();
  j["support"] = op.support().sites();
  j["kind"] = kind;
  j["data"] = matrix_to_json(op.matrix());
  return j;
}

inline json write_state(const DensityOp& op) {
  return write_state(op, "density");
}

inline json write_state(const PureVec& v) {
  json j;
  j["sites"] = v.support().system().dims();
  j["support"] = v.support().sites();
  j["kind"] = "pure";
  j["data"] = vector_to_json(v.vec());
  return j;
}

// ---------------------------------------------------------------------------
// covers and cochains

inline Cover read_cover(const json& j, const SiteSystem& sys) {
  require(j.is_object() && j.contains("patches"), Err::ParseError,
          "cover needs a patches array");
  std::vector<std::vector<int>> patches;
  for (const auto& p : j.at("patches")) patches.push_back(ints_from_json(p));
  if (j.contains("sites"))
    require(ints_from_json(j.at("sites")) == sys.dims(), Err::ParseError,
            "cover site dimensions disagree with the state");
  return Cover(sys, patches);
}

inline Cover read_cover(const json& j) {
  require(j.is_object() && j.contains("sites"), Err::ParseError,
          "standalone cover needs site dimensions");
  return read_cover(j, SiteSystem(ints_from_json(j.at("sites"))));
}

inline json write_cover(const Cover& cov) {
  json j;
  j["sites"] = cov.system().dims();
  json ps = json::array();
  for (int i = 0; i < cov.num_patches(); ++i) ps.push_back(cov.patch(i).sites());
  j["patches"] = std::move(ps);
  return j;
}

inline std::string tuple_key(const std::vector<int>& t) {
  std::string k;
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) k += ',';
    k += std::to_string(t[i]);
  }
  return k;
}

inline json write_cochain(const Cochain& c) {
  json j;
  j["cover"] = write_cover(c.cover());
  j["degree"] = c.degree();
  json comps;
  auto ts = index_tuples(c.cover().num_patches(), c.degree() + 1);
  for (const auto& t : ts) comps[tuple_key(t)] = matrix_to_json(c.at(t));
  j["comps"] = std::move(comps);
  return j;
}

inline Cochain read_cochain(const json& j) {
  require(j.is_object() && j.contains("cover") && j.contains("degree") &&
              j.contains("comps"),
          Err::ParseError, "cochain needs cover, degree, comps");
  Cover cov = read_cover(j.at("cover"));
  int degree = j.at("degree").get<int>();
  Cochain c = Cochain::zero(cov, degree);
  auto ts = index_tuples(cov.num_patches(), degree + 1);
  for (const auto& t : ts) {
    const std::string key = tuple_key(t);
    require(j.at("comps").contains(key), Err::ParseError,
            "cochain is missing component " + key);
    Mat m = matrix_from_json(j.at("comps").at(key));
    require(m.rows() == cov.isect(t).dim() && m.cols() == m.rows(),
            Err::ParseError, "cochain component has wrong shape");
    c.at(t) = std::move(m);
  }
  return c;
}

// ---------------------------------------------------------------------------
// witnesses

inline json write_witness(const Witness& w) {
  json j = write_state(w.op, "herm");
  j["structure"] = json{{"groups", w.structure.groups}};
  j["status"] = to_string(w.status);
  j["product_min"] = w.product_min;
  if (!w.refuter.empty()) {
    json cert = json::array();
    for (const auto& v : w.refuter) {
      json e;
      e["support"] = v.support().sites();
      e["data"] = vector_to_json(v.vec());
      cert.push_back(std::move(e));
    }
    j["certificate"] = std::move(cert);
  }
  return j;
}

inline WitnessStatus witness_status_from(const std::string& s) {
  if (s == "verified") return WitnessStatus::Verified;
  if (s == "probable") return WitnessStatus::Probable;
  if (s == "refuted") return WitnessStatus::Refuted;
  throw Error(Err::ParseError, "unknown witness status: " + s);
}

inline Witness read_witness(const json& j) {
  StateFile sf = read_state(j);
  Witness w;
  w.op = sf.herm();
  require(j.contains("structure") && j.at("structure").contains("groups"),
          Err::ParseError, "witness needs structure.groups");
  for (const auto& g : j.at("structure").at("groups"))
    w.structure.groups.push_back(ints_from_json(g));
  w.structure.validate(w.op.support());
  w.status = witness_status_from(j.value("status", std::string("probable")));
  w.product_min = j.value("product_min", 0.0);
  if (j.contains("certificate"))
    for (const auto& e : j.at("certificate"))
      w.refuter.emplace_back(
          Subsystem(sf.sys, ints_from_json(e.at("support"))),
          vector_from_json(e.at("data")));
  return w;
}

// ---------------------------------------------------------------------------
// marginal instances and certificates

inline MarginalInstance read_instance(const json& j) {
  require(j.is_object() && j.contains("cover") && j.contains("marginals"),
          Err::ParseError, "instance needs cover and marginals");
  std::vector<StateFile> states;
  const json& ms = j.at("marginals");
  for (size_t i = 0;; ++i) {
    const std::string key = std::to_string(i);
    if (!ms.contains(key)) break;
    states.push_back(read_state(ms.at(key)));
  }
  require(!states.empty(), Err::ParseError,
          "instance needs marginals keyed \"0\", \"1\", ...");
  Cover cov = read_cover(j.at("cover"), states[0].sys);
  require(static_cast<int>(states.size()) == cov.num_patches(),
          Err::ParseError, "one marginal per patch required");
  std::vector<DensityOp> margs;
  for (auto& s : states) margs.push_back(s.density());
  return MarginalInstance(std::move(cov), std::move(margs));
}

inline json write_instance(const MarginalInstance& inst) {
  json j;
  j["cover"] = write_cover(inst.cover);
  json ms;
  for (size_t i = 0; i < inst.marginals.size(); ++i)
    ms[std::to_string(i)] = write_state(inst.marginals[i]);
  j["marginals"] = std::move(ms);
  return j;
}

inline json write_certificate(const InfeasibilityCertificate& cert,
                              bool verified) {
  json j;
  j["kind"] = cert.kind == InfeasibilityCertificate::Kind::PsdExtension
                  ? "psd_extension"
                  : "separable_extension";
  j["verified"] = verified;
  if (cert.kind == InfeasibilityCertificate::Kind::PsdExtension) {
    json ys = json::array();
    for (const auto& y : cert.y) ys.push_back(write_state(y, "herm"));
    j["y"] = std::move(ys);
    j["alpha"] = cert.alpha;
    j["margin"] = cert.margin;
    j["psd_slack"] = cert.psd_slack;
  } else {
    j["patch"] = cert.patch;
    j["witness"] = write_witness(*cert.witness);
    j["witness_value"] = cert.witness_value;
  }
  return j;
}

inline InfeasibilityCertificate read_certificate(const json& j) {
  require(j.is_object() && j.contains("kind"), Err::ParseError,
          "certificate needs a kind");
  InfeasibilityCertificate cert;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "psd_extension") {
    cert.kind = InfeasibilityCertificate::Kind::PsdExtension;
    for (const auto& y : j.at("y")) cert.y.push_back(read_state(y).herm());
    cert.alpha = j.at("alpha").get<double>();
    cert.margin = j.at("margin").get<double>();
    cert.psd_slack = j.value("psd_slack", 0.0);
  } else if (kind == "separable_extension") {
    cert.kind = InfeasibilityCertificate::Kind::SeparableExtension;
    cert.patch = j.at("patch").get<int>();
    cert.witness = read_witness(j.at("witness"));
    cert.witness_value = j.at("witness_value").get<double>();
  } else {
    throw Error(Err::ParseError, "unknown certificate kind: " + kind);
  }
  return cert;
}

// ---------------------------------------------------------------------------
// pure patch families

inline PurePatchFamily read_pure_family(const json& j) {
  require(j.is_object() && j.contains("sites") && j.contains("patches") &&
              j.contains("vectors"),
          Err::ParseError, "pure family needs sites, patches, vectors");
  SiteSystem sys(ints_from_json(j.at("sites")));
  std::vector<std::vector<int>> patches;
  for (const auto& p : j.at("patches")) patches.push_back(ints_from_json(p));
  Cover cov(sys, patches);
  require(j.at("vectors").size() == static_cast<size_t>(cov.num_patches()),
          Err::ParseError, "one vector per patch required");
  // the cover sorts its patches; feed vectors by matching site sets
  std::vector<PureVec> vecs;
  for (int i = 0; i < cov.num_patches(); ++i) {
    const std::vector<int> want = cov.patch(i).sites();
    bool found = false;
    for (size_t k = 0; k < patches.size(); ++k) {
      std::vector<int> s = patches[k];
      std::sort(s.begin(), s.end());
      if (s == want) {
        vecs.emplace_back(cov.patch(i),
                          vector_from_json(j.at("vectors")[k]));
        found = true;
        break;
      }
    }
    require(found, Err::ParseError, "patch/vector mismatch in pure family");
  }
  return PurePatchFamily(std::move(cov), std::move(vecs));
}

inline json write_pure_family(const PurePatchFamily& fam) {
  json j;
  j["sites"] = fam.cover().system().dims();
  json ps = json::array(), vs = json::array();
  for (int i = 0; i < fam.size(); ++i) {
    ps.push_back(fam.cover().patch(i).sites());
    vs.push_back(vector_to_json(fam.vec(i).vec()));
  }
  j["patches"] = std::move(ps);
  j["vectors"] = std::move(vs);
  return j;
}

}  // namespace entobs::io
