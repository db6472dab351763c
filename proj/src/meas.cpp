#include "ikf/meas.hpp"

#include <json.hpp>

namespace ikf {

using nlohmann::json;

const char* to_string(MeasType t) {
  switch (t) {
    case MeasType::Propagation: return "propagation";
    case MeasType::Private: return "private";
    case MeasType::JointLocal: return "joint_local";
    case MeasType::JointInteragent: return "joint_interagent";
  }
  return "?";
}

MeasType meas_type_from_string(const std::string& s) {
  if (s == "propagation") return MeasType::Propagation;
  if (s == "private") return MeasType::Private;
  if (s == "joint_local" || s == "joint") return MeasType::JointLocal;
  if (s == "joint_interagent") return MeasType::JointInteragent;
  fail(ErrorCode::ConfigError, "unknown measurement type '" + s + "'");
}

void MeasData::validate() const {
  if (is_joint(type) != !participants.empty())
    fail(ErrorCode::DimensionMismatch, "participants must be present exactly for joint measurements");
  if (type != MeasType::Propagation && (R.rows() != z.size() || R.cols() != z.size()))
    fail(ErrorCode::DimensionMismatch, "z and R disagree");
  if (!H.empty() && is_joint(type) && H.size() != participants.size())
    fail(ErrorCode::DimensionMismatch, "one observation block per participant");
}

bool meas_before(const MeasData& a, const MeasData& b) {
  if (a.t != b.t) return a.t < b.t;
  const int ra = type_rank(a.type), rb = type_rank(b.type);
  if (ra != rb) return ra < rb;
  if (a.sensor != b.sensor) return a.sensor < b.sensor;
  return a.participants < b.participants;
}

std::vector<MatrixXd> observation_blocks(const MeasData& m, const ModelLookup& model_of) {
  if (!m.H.empty()) return m.H;
  if (m.type == MeasType::Private) {
    const LinearModel* lm = model_of(m.sensor);
    if (!lm) fail(ErrorCode::UnknownSensor, "no model for sensor " + std::to_string(m.sensor));
    return {lm->H_priv};
  }
  if (!is_joint(m.type) || m.participants.size() != 2)
    fail(ErrorCode::DimensionMismatch, "default observation model covers private and two-party relative only");
  const LinearModel* a = model_of(m.participants[0]);
  const LinearModel* b = model_of(m.participants[1]);
  if (!a && !b) fail(ErrorCode::UnknownSensor, "no model for relative observation");
  // a remote peer is assumed to expose position the same way as the local one
  const MatrixXd Ha = (a ? a : b)->H_pos;
  const MatrixXd Hb = (b ? b : a)->H_pos;
  return {-Ha, Hb};
}

namespace {

json vec_json(const VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

json mat_json(const MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

VectorXd json_vec(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

MatrixXd json_mat(const json& j) {
  if (j.empty()) return MatrixXd();
  if (!j[0].is_array()) {
    // scalar list: treated as a diagonal
    MatrixXd m = MatrixXd::Zero(j.size(), j.size());
    for (std::size_t i = 0; i < j.size(); ++i) m(i, i) = j[i].get<double>();
    return m;
  }
  MatrixXd m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) fail(ErrorCode::DimensionMismatch, "ragged matrix");
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string to_json_line(const MeasData& m) {
  json j;
  j["t"] = m.t;
  j["type"] = to_string(m.type);
  j["sensor"] = m.sensor;
  j["z"] = vec_json(m.z);
  j["R"] = mat_json(m.R);
  j["participants"] = m.participants;
  if (!m.H.empty()) {
    json h = json::array();
    for (const auto& b : m.H) h.push_back(mat_json(b));
    j["H"] = h;
  }
  if (!m.meta.empty()) j["meta"] = m.meta;
  return j.dump();
}

MeasData meas_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("bad measurement record: ") + e.what());
  }
  try {
    MeasData m;
    m.t = j.at("t").get<Tick>();
    m.type = meas_type_from_string(j.at("type").get<std::string>());
    m.sensor = j.at("sensor").get<NodeId>();
    m.z = j.contains("z") ? json_vec(j["z"]) : VectorXd();
    if (j.contains("R")) {
      const json& r = j["R"];
      if (r.is_number()) m.R = MatrixXd::Constant(1, 1, r.get<double>());
      else m.R = json_mat(r);
    }
    if (j.contains("participants")) m.participants = j["participants"].get<std::vector<NodeId>>();
    if (j.contains("H"))
      for (const auto& b : j["H"]) m.H.push_back(json_mat(b));
    if (j.contains("meta")) m.meta = j["meta"].get<std::string>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("bad measurement record: ") + e.what());
  }
}

std::vector<MeasData> read_jsonl(std::istream& in) {
  std::vector<MeasData> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    out.push_back(meas_from_json_line(line));
  }
  return out;
}

}  // namespace ikf
