"""Multi-lane driving simulator: kinematic-bicycle ego, IDM traffic,
randomized scenarios, and the published reward/cost shaping.

The road is straight with three same-direction lanes; its world heading is
randomized per episode (only spawn geometry changes, the ego-frame
observation is invariant). The 93-feature observation concatenates lane
boundary distances, ego dynamics, a reference trajectory sampled at four
horizons, and the eight nearest surrounding vehicles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..replay import Event

OBS_DIM = 93
ACT_DIM = 2

# observation layout
OB_SLICE = slice(0, 2)
OEGO_SLICE = slice(2, 9)
OREF_SLICE = slice(9, 29)
OSUR_SLICE = slice(29, 93)
REF_HORIZONS = (0.0, 0.1, 0.5, 1.0)
SUR_FEATURES = 8  # x, y, cos, sin, v, length, width, mask


@dataclass
class MultiLaneConfig:
    # geometry
    lanes_per_direction: int = 3
    lane_width: float = 3.75
    road_length: float = 400.0
    angle_deg_range: tuple[float, float] = (60.0, 120.0)
    # traffic
    traffic_flow_vph: float | None = 1000.0  # None: per-episode in flow range
    traffic_flow_range: tuple[float, float] = (600.0, 1200.0)
    traffic_speed_range: tuple[float, float] = (5.0, 10.0)
    veh_length_range: tuple[float, float] = (4.2, 5.0)
    veh_width_range: tuple[float, float] = (1.7, 2.0)
    lateral_bias_std: float = 0.15
    spawn_margin: float = 100.0
    # ego and dynamics
    dt: float = 0.1
    horizon_steps: int = 1500
    wheelbase: float = 2.7
    ego_length: float = 4.5
    ego_width: float = 1.9
    ego_start_s_range: tuple[float, float] = (10.0, 40.0)
    speed_cap: float = 25.0
    sensor_range: float = 100.0
    max_vehicles_observed: int = 8
    desired_speed_range: tuple[float, float] = (4.0, 12.0)
    # action/state bounds
    delta_ax_max: float = 0.25
    delta_steer_max: float = 0.0065
    ax_bounds: tuple[float, float] = (-1.5, 0.8)
    steer_bound: float = 0.065
    # reward weights
    rho_y: float = 2.5
    rho_v: float = 0.4
    rho_phi: float = 0.3
    rho_r: float = 0.3
    rho_acc: float = 0.2
    rho_delta: float = 0.15
    r_live: float = 12.0
    huber_delta: float = 1.0
    # cost weights and gates
    rho_ft: float = 5.0
    rho_fs: float = 5.0
    rho_ss: float = 1.0
    rho_b: float = 1.0
    dt_ft: float = 0.5
    d_front: float = 50.0
    d_side: float = 1.8
    d_st: float = 12.0
    d_ss: float = 2.0
    d_b: float = 1.8
    space_front_factor: float = 2.0  # A_front reaches d_st * factor ahead
    space_side_factor: float = 2.0  # A_side reaches d_ss * factor laterally
    v_gate_floor: float = 0.1
    collision_penalty: float = 100.0
    out_of_area_penalty: float = 400.0
    brake_event_decel: float = 1.0
    cost_weight: float = 1.0  # lane scoring weight on Q_c in select_reference


def huber(z: float | np.ndarray, delta: float = 1.0):
    z = np.abs(z)
    return np.where(z <= delta, 0.5 * z * z, delta * (z - 0.5 * delta))


@dataclass
class EgoState:
    x: float
    y: float
    phi: float
    v: float
    steer: float
    a_x: float
    prev_steer: float = 0.0
    prev_a_x: float = 0.0

    def beta(self) -> float:
        return math.atan(0.5 * math.tan(self.steer))

    @property
    def v_x(self) -> float:
        return self.v * math.cos(self.beta())

    @property
    def v_y(self) -> float:
        return self.v * math.sin(self.beta())

    def yaw_rate(self, wheelbase: float) -> float:
        return self.v * math.sin(self.beta()) / (0.5 * wheelbase)


@dataclass
class SimState:
    ego: EgoState
    road_heading: float
    lane_idx_target: int
    v_des: float
    # per-vehicle arrays
    veh_lane: np.ndarray
    veh_s: np.ndarray
    veh_n: np.ndarray
    veh_v: np.ndarray
    veh_v0: np.ndarray
    veh_len: np.ndarray
    veh_wid: np.ndarray
    steps: int = 0
    collided: bool = False
    out_of_area: bool = False
    arrived: bool = False

    @property
    def n_vehicles(self) -> int:
        return self.veh_s.shape[0]


def _rect_corners(cx, cy, heading, length, width) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    dx, dy = 0.5 * length, 0.5 * width
    local = np.array([[dx, dy], [dx, -dy], [-dx, -dy], [-dx, dy]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def check_collision(
    pose_a: tuple[float, float, float],
    size_a: tuple[float, float],
    pose_b: tuple[float, float, float],
    size_b: tuple[float, float],
) -> bool:
    """Oriented-rectangle overlap via the separating-axis test."""
    ca = _rect_corners(pose_a[0], pose_a[1], pose_a[2], size_a[0], size_a[1])
    cb = _rect_corners(pose_b[0], pose_b[1], pose_b[2], size_b[0], size_b[1])
    for heading in (pose_a[2], pose_b[2]):
        for ax in (
            np.array([math.cos(heading), math.sin(heading)]),
            np.array([-math.sin(heading), math.cos(heading)]),
        ):
            pa = ca @ ax
            pb = cb @ ax
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


class MultiLaneEnv:
    act_dim = ACT_DIM
    obs_dim = OBS_DIM

    def __init__(self, config: MultiLaneConfig | None = None):
        self.config = config or MultiLaneConfig()
        self.state: SimState | None = None

    # -- frame helpers -------------------------------------------------------
    def _axes(self):
        th = self.state.road_heading
        e_s = np.array([math.cos(th), math.sin(th)])
        e_n = np.array([-math.sin(th), math.cos(th)])
        return e_s, e_n

    def to_frenet(self, x: float, y: float) -> tuple[float, float]:
        e_s, e_n = self._axes()
        p = np.array([x, y])
        return float(p @ e_s), float(p @ e_n)

    def to_world(self, s: float, n: float) -> tuple[float, float]:
        e_s, e_n = self._axes()
        p = s * e_s + n * e_n
        return float(p[0]), float(p[1])

    def lane_center(self, lane_idx: int) -> float:
        # same-direction lanes occupy n in [-3*w, 0]; index 0 is leftmost
        return -(lane_idx + 0.5) * self.config.lane_width

    def boundary_distances(self, n_ego: float) -> tuple[float, float]:
        half_road = self.config.lanes_per_direction * self.config.lane_width
        return 0.0 - n_ego, n_ego + half_road

    # -- reset ----------------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        c = self.config
        heading = math.radians(rng.uniform(*c.angle_deg_range))
        flow = (
            c.traffic_flow_vph
            if c.traffic_flow_vph is not None
            else rng.uniform(*c.traffic_flow_range)
        )
        mean_speed = 0.5 * (c.traffic_speed_range[0] + c.traffic_speed_range[1])
        span = c.road_length + 2.0 * c.spawn_margin
        expected = flow * span / (3600.0 * mean_speed)
        count = int(round(expected * rng.uniform(0.9, 1.1))) if flow > 0 else 0

        lanes, ss, ns, vs, v0s, lens, wids = [], [], [], [], [], [], []
        for _ in range(count):
            lane = int(rng.integers(0, c.lanes_per_direction))
            s = rng.uniform(-c.spawn_margin, c.road_length + c.spawn_margin)
            # keep a car-following gap inside the lane
            ok = all(
                abs(s - s2) > 12.0 for lane2, s2 in zip(lanes, ss) if lane2 == lane
            )
            if not ok:
                continue
            lanes.append(lane)
            ss.append(s)
            ns.append(
                self.lane_center(lane)
                + float(np.clip(rng.normal(0.0, c.lateral_bias_std), -0.5, 0.5))
            )
            v = rng.uniform(*c.traffic_speed_range)
            vs.append(v)
            v0s.append(v * rng.uniform(1.0, 1.15))
            lens.append(rng.uniform(*c.veh_length_range))
            wids.append(rng.uniform(*c.veh_width_range))

        state = SimState(
            ego=EgoState(0, 0, 0, 0, 0, 0),
            road_heading=heading,
            lane_idx_target=0,
            v_des=rng.uniform(*c.desired_speed_range),
            veh_lane=np.array(lanes, dtype=np.int64),
            veh_s=np.array(ss, dtype=np.float64),
            veh_n=np.array(ns, dtype=np.float64),
            veh_v=np.array(vs, dtype=np.float64),
            veh_v0=np.array(v0s, dtype=np.float64),
            veh_len=np.array(lens, dtype=np.float64),
            veh_wid=np.array(wids, dtype=np.float64),
        )
        self.state = state

        # ego spawn: traffic-flow speed with a small Gaussian bias, retried
        # until it does not overlap any surrounding vehicle
        for _ in range(50):
            lane = int(rng.integers(0, c.lanes_per_direction))
            s0 = rng.uniform(*c.ego_start_s_range)
            n0 = self.lane_center(lane) + rng.normal(0.0, 0.2)
            v0 = float(
                np.clip(rng.uniform(*c.traffic_speed_range) + rng.normal(0.0, 0.5), 0.0, None)
            )
            phi0 = heading + rng.normal(0.0, 0.01)
            x0, y0 = self.to_world(s0, n0)
            state.ego = EgoState(x0, y0, phi0, v0, 0.0, 0.0)
            if not self._ego_collides():
                break
        else:
            # clear a bubble around the ego as a last resort
            keep = np.abs(state.veh_s - s0) > 15.0
            self._filter_vehicles(keep)

        # reference lane: current or adjacent
        current = self.ego_lane_index()
        choices = [
            lane
            for lane in (current - 1, current, current + 1)
            if 0 <= lane < c.lanes_per_direction
        ]
        state.lane_idx_target = int(choices[rng.integers(0, len(choices))])
        return self.observe()

    def _filter_vehicles(self, keep: np.ndarray):
        st = self.state
        st.veh_lane = st.veh_lane[keep]
        st.veh_s = st.veh_s[keep]
        st.veh_n = st.veh_n[keep]
        st.veh_v = st.veh_v[keep]
        st.veh_v0 = st.veh_v0[keep]
        st.veh_len = st.veh_len[keep]
        st.veh_wid = st.veh_wid[keep]

    def ego_lane_index(self) -> int:
        c = self.config
        _, n = self.to_frenet(self.state.ego.x, self.state.ego.y)
        idx = int(-n // c.lane_width)
        return int(np.clip(idx, 0, c.lanes_per_direction - 1))

    # -- surrounding vehicle dynamics -----------------------------------------
    def _advance_traffic(self):
        c = self.config
        st = self.state
        if st.n_vehicles == 0:
            return
        ego_s, ego_n = self.to_frenet(st.ego.x, st.ego.y)
        ego_lane = self.ego_lane_index()
        ego_on_road = st.ego is not None and self.boundary_distances(ego_n)[0] > 0
        accel = np.zeros(st.n_vehicles)
        for lane in range(c.lanes_per_direction):
            idx = np.where(st.veh_lane == lane)[0]
            if idx.size == 0:
                continue
            order = idx[np.argsort(st.veh_s[idx])]
            s_here = st.veh_s[order]
            v_here = st.veh_v[order]
            len_here = st.veh_len[order]
            # leader of each vehicle is the next one up the lane
            lead_s = np.empty_like(s_here)
            lead_v = np.empty_like(v_here)
            lead_len = np.empty_like(len_here)
            has_lead = np.zeros(s_here.shape, dtype=bool)
            lead_s[:-1] = s_here[1:]
            lead_v[:-1] = v_here[1:]
            lead_len[:-1] = len_here[1:]
            has_lead[:-1] = True
            has_lead[-1] = False
            lead_s[-1] = 0.0
            lead_v[-1] = 0.0
            lead_len[-1] = 0.0
            # the ego becomes the leader for the nearest follower behind it
            if ego_on_road and lane == ego_lane:
                behind = s_here < ego_s
                if behind.any():
                    j = int(np.where(behind)[0].max())
                    closer = not has_lead[j] or lead_s[j] > ego_s
                    if closer:
                        lead_s[j] = ego_s
                        lead_v[j] = st.ego.v_x
                        lead_len[j] = c.ego_length
                        has_lead[j] = True
            accel[order] = _idm_accel(
                v_here, st.veh_v0[order], s_here, len_here,
                lead_s, lead_v, lead_len, has_lead,
            )
        st.veh_v = np.clip(st.veh_v + accel * c.dt, 0.0, None)
        st.veh_s = st.veh_s + st.veh_v * c.dt
        # recycle past the far margin to keep the flow stationary
        wrap = st.veh_s > c.road_length + c.spawn_margin
        if wrap.any():
            st.veh_s[wrap] -= c.road_length + 2.0 * c.spawn_margin

    # -- geometry in the ego frame ----------------------------------------------
    def _relative_vehicles(self):
        """(x_rel, y_rel, heading_rel, v, length, width) in the ego frame."""
        st = self.state
        if st.n_vehicles == 0:
            empty = np.zeros(0)
            return empty, empty, empty, empty, empty, empty
        e_s, e_n = self._axes()
        pos = st.veh_s[:, None] * e_s + st.veh_n[:, None] * e_n
        dp = pos - np.array([st.ego.x, st.ego.y])
        cphi, sphi = math.cos(st.ego.phi), math.sin(st.ego.phi)
        x_rel = dp[:, 0] * cphi + dp[:, 1] * sphi
        y_rel = -dp[:, 0] * sphi + dp[:, 1] * cphi
        heading_rel = np.full(st.n_vehicles, st.road_heading - st.ego.phi)
        return x_rel, y_rel, heading_rel, st.veh_v, st.veh_len, st.veh_wid

    def _ego_collides(self) -> bool:
        st = self.state
        c = self.config
        if st.n_vehicles == 0:
            return False
        e_s, e_n = self._axes()
        pos = st.veh_s[:, None] * e_s + st.veh_n[:, None] * e_n
        d2 = ((pos - np.array([st.ego.x, st.ego.y])) ** 2).sum(axis=1)
        near = np.where(d2 < 15.0**2)[0]
        ego_pose = (st.ego.x, st.ego.y, st.ego.phi)
        ego_size = (c.ego_length, c.ego_width)
        for i in near:
            if check_collision(
                ego_pose,
                ego_size,
                (pos[i, 0], pos[i, 1], st.road_heading),
                (st.veh_len[i], st.veh_wid[i]),
            ):
                return True
        return False

    # -- observation ---------------------------------------------------------------
    def observe(self) -> np.ndarray:
        c = self.config
        st = self.state
        ego = st.ego
        s_ego, n_ego = self.to_frenet(ego.x, ego.y)
        d_left, d_right = self.boundary_distances(n_ego)

        o_b = np.array([d_left, d_right])
        o_ego = np.array(
            [
                ego.v_x,
                ego.v_y,
                ego.yaw_rate(c.wheelbase),
                ego.steer,
                ego.a_x,
                ego.prev_steer,
                ego.prev_a_x,
            ]
        )

        n_ref = self.lane_center(st.lane_idx_target)
        cphi, sphi = math.cos(ego.phi), math.sin(ego.phi)
        ref_feats = []
        for tau in REF_HORIZONS:
            xw, yw = self.to_world(s_ego + st.v_des * tau, n_ref)
            dx, dy = xw - ego.x, yw - ego.y
            ref_feats.extend(
                [
                    dx * cphi + dy * sphi,
                    -dx * sphi + dy * cphi,
                    math.cos(st.road_heading - ego.phi),
                    math.sin(st.road_heading - ego.phi),
                    st.v_des,
                ]
            )
        o_ref = np.array(ref_feats)

        x_rel, y_rel, heading_rel, v, length, width = self._relative_vehicles()
        o_sur = np.zeros(c.max_vehicles_observed * SUR_FEATURES)
        if x_rel.size:
            dist = np.hypot(x_rel, y_rel)
            visible = np.where(dist <= c.sensor_range)[0]
            order = visible[np.argsort(dist[visible], kind="stable")]
            for slot, i in enumerate(order[: c.max_vehicles_observed]):
                base = slot * SUR_FEATURES
                o_sur[base : base + SUR_FEATURES] = [
                    x_rel[i],
                    y_rel[i],
                    math.cos(heading_rel[i]),
                    math.sin(heading_rel[i]),
                    v[i],
                    length[i],
                    width[i],
                    1.0,
                ]
        return np.concatenate([o_b, o_ego, o_ref, o_sur])

    def observation_scale(self) -> np.ndarray:
        c = self.config
        scale = np.ones(OBS_DIM)
        scale[OB_SLICE] = 10.0
        scale[OEGO_SLICE] = [10.0, 2.0, 0.5, c.steer_bound, 1.5, c.steer_bound, 1.5]
        scale[OREF_SLICE] = np.tile([12.0, 10.0, 1.0, 1.0, 10.0], len(REF_HORIZONS))
        scale[OSUR_SLICE] = np.tile(
            [50.0, 10.0, 1.0, 1.0, 10.0, 5.0, 2.0, 1.0], c.max_vehicles_observed
        )
        return scale

    # -- reward and cost --------------------------------------------------------------
    def tracking_errors(self) -> tuple[float, float, float]:
        st = self.state
        _, n_ego = self.to_frenet(st.ego.x, st.ego.y)
        y_err = n_ego - self.lane_center(st.lane_idx_target)
        v_err = st.ego.v_x - st.v_des
        phi_err = _wrap_angle(st.ego.phi - st.road_heading)
        return y_err, v_err, phi_err

    def reward(self, d_ax: float, d_steer: float) -> tuple[float, dict]:
        c = self.config
        ego = self.state.ego
        y_err, v_err, phi_err = self.tracking_errors()
        h = lambda z: float(huber(z, c.huber_delta))
        r_trac = -c.rho_y * h(y_err) - c.rho_v * h(v_err) - c.rho_phi * h(phi_err)
        r_act = -c.rho_acc * ego.a_x**2 - c.rho_delta * ego.steer**2
        r_comf = (
            -c.rho_r * h(ego.yaw_rate(c.wheelbase))
            - c.rho_acc * d_ax**2
            - c.rho_delta * d_steer**2
        )
        parts = {
            "r_trac": r_trac,
            "r_act": r_act,
            "r_comf": r_comf,
            "r_live": c.r_live,
        }
        return r_trac + r_act + r_comf + c.r_live, parts

    def cost(self) -> tuple[float, dict]:
        c = self.config
        st = self.state
        x_rel, y_rel, _, _, length, _ = self._relative_vehicles()
        _, n_ego = self.to_frenet(st.ego.x, st.ego.y)
        d_left, d_right = self.boundary_distances(n_ego)

        c_front = 0.0
        c_space = 0.0
        if x_rel.size:
            v_gate = max(st.ego.v_x, c.v_gate_floor)
            in_front = (x_rel >= 0) & (x_rel <= c.d_front) & (np.abs(y_rel) <= c.d_side)
            c_front = float(
                c.rho_ft * (1.0 - np.tanh(x_rel[in_front] / (v_gate * c.dt_ft))).sum()
            )
            in_a_front = (
                (x_rel >= 0)
                & (x_rel <= c.d_st * c.space_front_factor)
                & (np.abs(y_rel) <= c.d_side)
            )
            c_space += float(
                c.rho_fs * (1.0 - np.tanh(x_rel[in_a_front] / c.d_st)).sum()
            )
            in_a_side = (
                (np.abs(x_rel) <= length)
                & (np.abs(y_rel) > c.d_side)
                & (np.abs(y_rel) <= c.d_ss * c.space_side_factor)
            )
            c_space += float(
                c.rho_ss * (1.0 - np.tanh(np.abs(y_rel[in_a_side]) / c.d_ss)).sum()
            )
        c_b = c.rho_b * (1.0 - math.tanh(max(min(d_left, d_right), 0.0) / c.d_b))
        c_terminal = 0.0
        if st.collided:
            c_terminal += c.collision_penalty
        if st.out_of_area:
            c_terminal += c.out_of_area_penalty
        parts = {
            "c_front": c_front,
            "c_space": c_space,
            "c_b": c_b,
            "c_terminal": c_terminal,
        }
        return c_front + c_space + c_b + c_terminal, parts

    # -- stepping ---------------------------------------------------------------------
    def step(self, action: np.ndarray):
        """action is normalized [-1, 1]^2: acceleration and steering increments."""
        c = self.config
        st = self.state
        ego = st.ego
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        d_ax = float(a[0]) * c.delta_ax_max
        d_steer = float(a[1]) * c.delta_steer_max

        ego.prev_steer, ego.prev_a_x = ego.steer, ego.a_x
        ego.a_x = float(np.clip(ego.a_x + d_ax, *c.ax_bounds))
        ego.steer = float(np.clip(ego.steer + d_steer, -c.steer_bound, c.steer_bound))

        ego.v = float(np.clip(ego.v + ego.a_x * c.dt, 0.0, c.speed_cap))
        beta = ego.beta()
        ego.x += ego.v * math.cos(ego.phi + beta) * c.dt
        ego.y += ego.v * math.sin(ego.phi + beta) * c.dt
        ego.phi = _wrap_angle(
            ego.phi + ego.v * math.sin(beta) / (0.5 * c.wheelbase) * c.dt
        )

        self._advance_traffic()
        st.steps += 1

        s_ego, n_ego = self.to_frenet(ego.x, ego.y)
        d_left, d_right = self.boundary_distances(n_ego)
        st.collided = self._ego_collides()
        st.out_of_area = d_left <= 0.0 or d_right <= 0.0
        st.arrived = (not st.collided and not st.out_of_area
                      and s_ego >= c.road_length)

        reward, r_parts = self.reward(d_ax, d_steer)
        cost, c_parts = self.cost()

        if st.collided:
            event = Event.COLLISION
        elif st.out_of_area:
            event = Event.OUT_OF_AREA
        elif ego.a_x <= -c.brake_event_decel:
            event = Event.BRAKING
        else:
            event = Event.NORMAL
        done = (
            st.collided or st.out_of_area or st.arrived
            or st.steps >= c.horizon_steps
        )
        y_err, v_err, phi_err = self.tracking_errors()
        info = {
            "event": event,
            "arrival": st.arrived,
            "reward_parts": r_parts,
            "cost_parts": c_parts,
            "x": ego.x,
            "y": ego.y,
            "phi": ego.phi,
            "v_x": ego.v_x,
            "a_x": ego.a_x,
            "steer": ego.steer,
            "y_err": y_err,
            "v_err": v_err,
            "phi_err": phi_err,
            "s": s_ego,
        }
        return self.observe(), reward, cost, done, info

    # -- evaluation-time reference selection ----------------------------------------
    def select_reference(self, agent) -> int:
        """Re-pick the target lane by scoring each candidate with the critics.

        Scores mean Q_r - cost_weight * Q_c at the current state using the
        actor's deterministic action for each candidate observation; ties
        keep the current target lane.
        """
        c = self.config
        st = self.state
        current = st.lane_idx_target
        candidates = [
            lane
            for lane in (current - 1, current, current + 1)
            if 0 <= lane < c.lanes_per_direction
        ]
        best_lane, best_score = current, -np.inf
        for lane in candidates:
            st.lane_idx_target = lane
            obs = self.observe()
            action = agent.act_deterministic(obs)
            q_r, q_c = agent.q_values(obs[None, :], action[None, :])
            score = float(q_r[0]) - c.cost_weight * float(q_c[0])
            better = score > best_score + 1e-9
            tie_keep = abs(score - best_score) <= 1e-9 and lane == current
            if better or tie_keep:
                best_lane, best_score = lane, score
        st.lane_idx_target = best_lane
        return best_lane


def _wrap_angle(a: float) -> float:
    return float((a + math.pi) % (2.0 * math.pi) - math.pi)


def _idm_accel(v, v0, s, length, lead_s, lead_v, lead_len, has_lead):
    """Intelligent driver model acceleration for one lane of followers."""
    s0, headway, a_max, b_comf, expo = 2.0, 1.5, 1.5, 2.0, 4.0
    free = a_max * (1.0 - (np.clip(v / np.maximum(v0, 0.1), 0.0, None)) ** expo)
    gap = lead_s - s - 0.5 * (lead_len + length)
    gap = np.maximum(gap, 0.1)
    dv = v - lead_v
    s_star = s0 + np.maximum(
        0.0, v * headway + v * dv / (2.0 * math.sqrt(a_max * b_comf))
    )
    interact = -a_max * (s_star / gap) ** 2
    accel = free + np.where(has_lead, interact, 0.0)
    return np.clip(accel, -6.0, a_max)
