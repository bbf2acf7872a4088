//! Region-graph route planning. Regions are convex, so a route is a chain of
//! straight legs joined at crossing points on the shared edges.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::geometry::{self, Point};
use super::profile::AgentProfile;
use super::scene::{Edge, Scene};
use super::{DoorState, Position};

/// Crossing points stay this far from the ends of an edge segment.
const PORTAL_INSET: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum Passage {
    Open,
    /// A closed timed door: plannable, but movers stop in front of it.
    Wait(String),
    /// Not traversable. Carries the door responsible, if any.
    Blocked(Option<String>),
}

pub fn passage(
    edge: &Edge,
    profile: &AgentProfile,
    doors: &BTreeMap<String, DoorState>,
) -> Passage {
    if !edge.allows(profile) {
        return Passage::Blocked(None);
    }
    let Some(door_id) = &edge.door else {
        return Passage::Open;
    };
    match doors.get(door_id) {
        Some(door) if door.open => Passage::Open,
        Some(door) if door.timed => Passage::Wait(door_id.clone()),
        _ => Passage::Blocked(Some(door_id.clone())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub to: Point,
    /// Region the mover is in after completing the leg.
    pub region_after: String,
    /// Set when the leg ends in front of a closed timed door.
    pub wait_door: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub legs: Vec<Leg>,
}

impl Route {
    pub fn length(&self, from: Point) -> f64 {
        let mut prev = from;
        let mut total = 0.0;
        for leg in &self.legs {
            total += prev.distance(leg.to);
            prev = leg.to;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    /// A route exists on the map but a door on it is impassable right now.
    Door(String),
    /// No route exists for this agent at all.
    Unreachable,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Start,
    /// Crossed edge `idx`; `into_b` tells which side the mover ends up on.
    Cross {
        idx: usize,
        into_b: bool,
    },
    Goal,
}

struct Queued {
    estimate: f64,
    cost: f64,
    node: Node,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on estimate, ties broken by node for determinism
        other
            .estimate
            .total_cmp(&self.estimate)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// A* over edge crossings, using edge midpoints as the crossing anchors.
/// Returns the crossed edges in order, each with the region entered.
fn search(
    scene: &Scene,
    from: &Position,
    to: &Position,
    usable: impl Fn(&Edge) -> bool,
) -> Option<Vec<(usize, String)>> {
    let goal = to.point();
    let anchor = |node: Node| match node {
        Node::Start => from.point(),
        Node::Cross { idx, .. } => scene.edges[idx].midpoint(),
        Node::Goal => goal,
    };
    let region_of = |node: Node| -> &str {
        match node {
            Node::Start => &from.region,
            Node::Cross { idx, into_b } => {
                let e = &scene.edges[idx];
                if into_b {
                    &e.b
                } else {
                    &e.a
                }
            }
            Node::Goal => &to.region,
        }
    };

    let mut best: BTreeMap<Node, f64> = BTreeMap::from([(Node::Start, 0.0)]);
    let mut parent: BTreeMap<Node, Node> = BTreeMap::new();
    let mut heap = BinaryHeap::from([Queued {
        estimate: from.point().distance(goal),
        cost: 0.0,
        node: Node::Start,
    }]);

    while let Some(Queued { cost, node, .. }) = heap.pop() {
        if node == Node::Goal {
            let mut chain = Vec::new();
            let mut cur = node;
            while let Some(&prev) = parent.get(&cur) {
                if let Node::Cross { idx, .. } = prev {
                    chain.push((idx, region_of(prev).to_string()));
                }
                cur = prev;
            }
            chain.reverse();
            return Some(chain);
        }
        if best.get(&node).is_some_and(|&b| cost > b) {
            continue;
        }
        let here = anchor(node);
        let region = region_of(node);
        let mut relax = |next: Node, step: f64| {
            let total = cost + step;
            if best.get(&next).is_none_or(|&b| total < b) {
                best.insert(next, total);
                parent.insert(next, node);
                heap.push(Queued {
                    estimate: total + anchor(next).distance(goal),
                    cost: total,
                    node: next,
                });
            }
        };
        if region == to.region {
            relax(Node::Goal, here.distance(goal));
        }
        for (idx, edge) in scene.edges_of(region) {
            if !usable(edge) {
                continue;
            }
            let into_b = edge.a == region;
            if let Node::Cross { idx: came, .. } = node {
                if came == idx {
                    continue;
                }
            }
            relax(Node::Cross { idx, into_b }, here.distance(edge.midpoint()));
        }
    }
    None
}

fn inset(edge: &Edge) -> (Point, Point) {
    let [a, b] = edge.segment;
    let len = a.distance(b);
    if len <= 2.0 * PORTAL_INSET {
        let m = edge.midpoint();
        return (m, m);
    }
    let t = PORTAL_INSET / len;
    (a.lerp(b, t), a.lerp(b, 1.0 - t))
}

/// Plans a route from `from` to `to` for an agent, honoring its capabilities
/// and the current door states.
pub fn plan(
    scene: &Scene,
    from: &Position,
    to: &Position,
    profile: &AgentProfile,
    doors: &BTreeMap<String, DoorState>,
) -> Result<Route, PlanError> {
    let usable = |e: &Edge| !matches!(passage(e, profile, doors), Passage::Blocked(_));
    let Some(chain) = search(scene, from, to, usable) else {
        // Find out whether a door is to blame by planning on capability alone.
        let Some(ideal) = search(scene, from, to, |e| e.allows(profile)) else {
            return Err(PlanError::Unreachable);
        };
        let door =
            ideal.iter().find_map(
                |(idx, _)| match passage(&scene.edges[*idx], profile, doors) {
                    Passage::Blocked(door) => door,
                    _ => None,
                },
            );
        return Err(door.map(PlanError::Door).unwrap_or(PlanError::Unreachable));
    };

    let mut legs = Vec::with_capacity(chain.len() + 1);
    let mut prev = from.point();
    for (i, (idx, entered)) in chain.iter().enumerate() {
        let edge = &scene.edges[*idx];
        let next_anchor = chain
            .get(i + 1)
            .map(|(n, _)| scene.edges[*n].midpoint())
            .unwrap_or(to.point());
        let (a, b) = inset(edge);
        let point = match geometry::line_crossing(a, b, prev, next_anchor) {
            Some(t) => a.lerp(b, t.clamp(0.0, 1.0)),
            None => geometry::closest_on_segment(a, b, prev),
        };
        let wait_door = match passage(edge, profile, doors) {
            Passage::Wait(door) => Some(door),
            _ => None,
        };
        legs.push(Leg {
            to: point,
            region_after: entered.clone(),
            wait_door,
        });
        prev = point;
    }
    legs.push(Leg {
        to: to.point(),
        region_after: to.region.clone(),
        wait_door: None,
    });
    Ok(Route { legs })
}
