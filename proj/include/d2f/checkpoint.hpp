#pragma once

#include <optional>
#include <string>

#include "d2f/model.hpp"

namespace d2f::model {

enum class Role { teacher, student };

const char* role_name(Role r);

// Binary checkpoint: magic, format version, dtype tag, role tag, the model
// config, then each parameter array with its name and shape. Loading checks
// magic/version, requires the stored dtype to match Real exactly, and
// requires the stored role to match what the caller expects — a decoder that
// needs a block-causal student refuses a teacher file outright.
template <typename Real>
void save_checkpoint(const std::string& path, const Net<Real>& net, Role role);

struct CheckpointInfo {
    ModelConfig cfg;
    Role role = Role::teacher;
    bool is_double = false;
};

CheckpointInfo peek_checkpoint(const std::string& path);

template <typename Real>
Net<Real> load_checkpoint(const std::string& path, Role expect_role,
                          const std::optional<ModelConfig>& expect_cfg = std::nullopt);

}  // namespace d2f::model
