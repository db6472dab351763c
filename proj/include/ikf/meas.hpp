#pragma once

#include <functional>
#include <istream>
#include <string>
#include <vector>

#include "ikf/model.hpp"

namespace ikf {

enum class MeasType { Propagation, Private, JointLocal, JointInteragent };

const char* to_string(MeasType t);
MeasType meas_type_from_string(const std::string& s);

// propagation < private < joint
inline int type_rank(MeasType t) {
  switch (t) {
    case MeasType::Propagation: return 0;
    case MeasType::Private: return 1;
    default: return 2;
  }
}

inline bool is_joint(MeasType t) { return t == MeasType::JointLocal || t == MeasType::JointInteragent; }

// Propagation records carry the control input in z (empty = model default)
// and an optional per-tick process noise override in R.
struct MeasData {
  Tick t = 0;
  MeasType type = MeasType::Propagation;
  NodeId sensor = 0;
  VectorXd z;
  MatrixXd R;
  std::vector<NodeId> participants;
  std::vector<MatrixXd> H;  // optional, aligned with participants (or the sensor for private)
  std::string meta;

  void validate() const;
};

// Total order used for in-order processing and replay (arrival order breaks remaining ties).
bool meas_before(const MeasData& a, const MeasData& b);

using ModelLookup = std::function<const LinearModel*(NodeId)>;

// Sensitivity blocks per participant (a single block for private updates).
std::vector<MatrixXd> observation_blocks(const MeasData& m, const ModelLookup& model_of);

std::string to_json_line(const MeasData& m);
MeasData meas_from_json_line(const std::string& line);
std::vector<MeasData> read_jsonl(std::istream& in);

}  // namespace ikf
