#pragma once

#include <string>
#include <vector>

#include "psbf/dbn.hpp"

namespace psbf::fixtures {

/// Two binary state variables that swap their values at every step.
/// Both variables are deterministic yet not passive: there are no edges
/// inside the t+1 slice, so no witness set can satisfy the edge clause.
/// With `with_sensors`, each variable gets a noise-free copy sensor.
inline ProcessModel swap_process(bool with_sensors = false) {
  ProcessModel p;
  p.state_vars = {{1, VarKind::State, 2}, {2, VarKind::State, 2}};
  if (with_sensors) p.obs_vars = {{1, VarKind::Obs, 2}, {2, VarKind::Obs, 2}};
  Dbn d;
  d.action_id = "a0";
  d.n = 2;
  d.m = with_sensors ? 2 : 0;
  d.state_dims = {2, 2};
  if (with_sensors) d.obs_dims = {2, 2};
  d.add_edge(state_t(1), state_t1(0));
  d.add_edge(state_t(0), state_t1(1));
  if (with_sensors) {
    d.add_edge(state_t1(0), obs_t1(0));
    d.add_edge(state_t1(1), obs_t1(1));
  }
  d.finalize();
  for (int i = 0; i < 2; ++i)
    d.set_x_cpt(i, [](const StateTuple& t_vals, const StateTuple&, std::vector<double>& row) {
      row[t_vals[0]] = 1.0;
    });
  for (int j = 0; j < d.m; ++j)
    d.set_y_cpt(j, [](const StateTuple& x_vals, const ObsTuple&, std::vector<double>& row) {
      row[x_vals[0]] = 1.0;
    });
  p.actions.push_back(std::move(d));
  return p;
}

/// Every state variable copies its own previous value; optional uniform
/// sensors. A fixed point for any correct filter.
inline ProcessModel identity_process(int n, int domain = 2, bool uniform_sensors = false) {
  ProcessModel p;
  for (int i = 0; i < n; ++i) p.state_vars.push_back({i + 1, VarKind::State, domain});
  if (uniform_sensors)
    for (int i = 0; i < n; ++i) p.obs_vars.push_back({i + 1, VarKind::Obs, domain});
  Dbn d;
  d.action_id = "a0";
  d.n = n;
  d.m = uniform_sensors ? n : 0;
  d.state_dims.assign(n, domain);
  if (uniform_sensors) d.obs_dims.assign(n, domain);
  for (int i = 0; i < n; ++i) d.add_edge(state_t(i), state_t1(i));
  if (uniform_sensors)
    for (int i = 0; i < n; ++i) d.add_edge(state_t1(i), obs_t1(i));
  d.finalize();
  for (int i = 0; i < n; ++i)
    d.set_x_cpt(i, [](const StateTuple& t_vals, const StateTuple&, std::vector<double>& row) {
      row[t_vals[0]] = 1.0;
    });
  for (int j = 0; j < d.m; ++j)
    d.set_y_cpt(j, [domain](const StateTuple&, const ObsTuple&, std::vector<double>& row) {
      for (int v = 0; v < domain; ++v) row[v] = 1.0 / domain;
    });
  p.actions.push_back(std::move(d));
  return p;
}

/// Robot arm with three rotational joints. Joint orientations are absolute;
/// each joint is mechanically coupled to its predecessor, so a rotation of
/// joint i drags every later joint along. Actions cw<i>/ccw<i> rotate joint i
/// one step (cyclically) in the respective direction; all dynamics are
/// deterministic and each joint has a noise-free orientation sensor.
///
/// The joint domain defaults to 8 orientations: passivity and the skip
/// analysis depend only on edges and which table entries are zero, not on
/// the domain size, and 8 keeps the joint state space enumerable.
inline ProcessModel robot_arm(int domain = 8) {
  ProcessModel p;
  for (int i = 0; i < 3; ++i) p.state_vars.push_back({i + 1, VarKind::State, domain});
  for (int i = 0; i < 3; ++i) p.obs_vars.push_back({i + 1, VarKind::Obs, domain});

  auto make_action = [&](int target, int delta, const std::string& id) {
    Dbn d;
    d.action_id = id;
    d.n = 3;
    d.m = 3;
    d.state_dims.assign(3, domain);
    d.obs_dims.assign(3, domain);
    for (int i = 0; i < 3; ++i) {
      d.add_edge(state_t(i), state_t1(i));
      if (i > 0) {
        d.add_edge(state_t(i - 1), state_t1(i));
        d.add_edge(state_t1(i - 1), state_t1(i));
      }
      d.add_edge(state_t1(i), obs_t1(i));
    }
    d.finalize();
    // parents of joint i in table order: (theta_{i-1}^t, theta_i^t, theta_{i-1}^{t+1})
    for (int i = 0; i < 3; ++i) {
      d.set_x_cpt(i, [&, i](const StateTuple& t_vals, const StateTuple& t1_vals,
                            std::vector<double>& row) {
        int shift = (i == target) ? delta : 0;
        int own_prev, pred_change = 0;
        if (i == 0) {
          own_prev = t_vals[0];
        } else {
          own_prev = t_vals[1];
          pred_change = t1_vals[0] - t_vals[0];
        }
        int next = ((own_prev + pred_change + shift) % domain + domain) % domain;
        row[next] = 1.0;
      });
    }
    for (int j = 0; j < 3; ++j)
      d.set_y_cpt(j, [](const StateTuple& x_vals, const ObsTuple&, std::vector<double>& row) {
        row[x_vals[0]] = 1.0;
      });
    return d;
  };

  for (int i = 0; i < 3; ++i) {
    p.actions.push_back(make_action(i, +1, "cw" + std::to_string(i + 1)));
    p.actions.push_back(make_action(i, -1, "ccw" + std::to_string(i + 1)));
  }
  return p;
}

}  // namespace psbf::fixtures
