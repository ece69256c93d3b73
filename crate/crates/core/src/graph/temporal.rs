//! Windowed scene graphs built from per-frame agent annotations.
//!
//! Every frame contributes an unlabeled scene node followed by one node per
//! annotated agent. Within a frame the scene node is linked both ways to each
//! agent. Across adjacent frames of a window, scene nodes are linked both ways,
//! and agents sharing a tube uid are linked both ways. Every node carries one
//! self-loop.
//!
//! Node features are `[box(4) | action one-hot | location one-hot | type(2)]`
//! with type `(1, 0)` for scene nodes and `(0, 1)` for agents. Scene nodes have
//! zero box/action/location blocks. Tube uids never enter the features.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{NodeGraph, Split, UNLABELED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnnotation {
    pub tube_uid: String,
    /// Normalized `[x1, y1, x2, y2]`, each in `[0, 1]`.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub action: Vec<f64>,
    pub location: Vec<f64>,
    pub class_label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_id: i64,
    pub agents: Vec<AgentAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_size: usize,
    pub window_stride: usize,
    pub frame_step: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size: 4,
            window_stride: 4,
            frame_step: 5,
        }
    }
}

/// Builds one graph per complete window.
///
/// Frames are ordered by `frame_id`, subsampled every `frame_step` frames
/// starting from the first, then cut into windows of `window_size` frames
/// starting every `window_stride` frames. Windows running past the last frame
/// are dropped. All nodes are tagged [`Split::Train`].
pub fn build_temporal_graph(
    frames: &[FrameAnnotation],
    config: &WindowConfig,
) -> Result<Vec<NodeGraph>> {
    if config.window_size == 0 || config.window_stride == 0 || config.frame_step == 0 {
        return Err(Error::InvalidArgument(
            "window size, window stride and frame step must be positive".into(),
        ));
    }
    let mut ordered: Vec<&FrameAnnotation> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_id);
    let (action_dim, location_dim) = validate(&ordered)?;
    let sampled: Vec<&FrameAnnotation> = ordered.into_iter().step_by(config.frame_step).collect();

    let mut graphs = Vec::new();
    let mut start = 0;
    while start + config.window_size <= sampled.len() {
        let window = &sampled[start..start + config.window_size];
        let mut graph = window_graph(window, action_dim, location_dim)?;
        let ids: Vec<String> = window.iter().map(|f| f.frame_id.to_string()).collect();
        let meta = graph.metadata_mut();
        meta.insert("window_index".into(), graphs.len().to_string());
        meta.insert("frame_ids".into(), ids.join(","));
        graphs.push(graph);
        start += config.window_stride;
    }
    Ok(graphs)
}

fn validate(frames: &[&FrameAnnotation]) -> Result<(usize, usize)> {
    let mut dims: Option<(usize, usize)> = None;
    for frame in frames {
        let mut seen = HashMap::new();
        for agent in &frame.agents {
            if seen.insert(agent.tube_uid.as_str(), ()).is_some() {
                return Err(Error::Data(format!(
                    "frame {}: tube uid {:?} appears twice",
                    frame.frame_id, agent.tube_uid
                )));
            }
            if agent.bbox.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Data(format!(
                    "frame {}: box {:?} not normalized to [0, 1]",
                    frame.frame_id, agent.bbox
                )));
            }
            for (name, v) in [("action", &agent.action), ("location", &agent.location)] {
                if v.iter().filter(|&&x| x != 0.0).count() > 1 {
                    return Err(Error::Data(format!(
                        "frame {}: {name} vector of {:?} is not one-hot",
                        frame.frame_id, agent.tube_uid
                    )));
                }
            }
            if agent.class_label < UNLABELED {
                return Err(Error::Data(format!(
                    "frame {}: invalid class label {}",
                    frame.frame_id, agent.class_label
                )));
            }
            let d = (agent.action.len(), agent.location.len());
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Data(format!(
                        "frame {}: action/location widths {d:?} differ from {prev:?}",
                        frame.frame_id
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(dims.unwrap_or((0, 0)))
}

fn window_graph(
    window: &[&FrameAnnotation],
    action_dim: usize,
    location_dim: usize,
) -> Result<NodeGraph> {
    let width = 4 + action_dim + location_dim + 2;
    let n: usize = window.iter().map(|f| 1 + f.agents.len()).sum();
    let mut features = Array2::zeros((n, width));
    let mut labels = Vec::with_capacity(n);
    let mut edges = Vec::new();

    // (scene node, tube uid -> agent node) per frame.
    let mut frame_nodes: Vec<(usize, HashMap<&str, usize>)> = Vec::with_capacity(window.len());
    let mut next = 0;
    for frame in window {
        let scene = next;
        next += 1;
        features[[scene, width - 2]] = 1.0;
        labels.push(UNLABELED);
        let mut agents = HashMap::new();
        for agent in &frame.agents {
            let v = next;
            next += 1;
            let mut row = features.row_mut(v);
            for (col, &x) in agent
                .bbox
                .iter()
                .chain(&agent.action)
                .chain(&agent.location)
                .enumerate()
            {
                row[col] = x;
            }
            row[width - 1] = 1.0;
            labels.push(agent.class_label);
            edges.push((scene, v));
            edges.push((v, scene));
            agents.insert(agent.tube_uid.as_str(), v);
        }
        frame_nodes.push((scene, agents));
    }

    for pair in frame_nodes.windows(2) {
        let (scene_a, agents_a) = &pair[0];
        let (scene_b, agents_b) = &pair[1];
        edges.push((*scene_a, *scene_b));
        edges.push((*scene_b, *scene_a));
        let mut linked: Vec<(usize, usize)> = agents_a
            .iter()
            .filter_map(|(uid, &a)| agents_b.get(uid).map(|&b| (a, b)))
            .collect();
        linked.sort_unstable();
        for (a, b) in linked {
            edges.push((a, b));
            edges.push((b, a));
        }
    }
    edges.extend((0..n).map(|v| (v, v)));

    let graph = NodeGraph::new(features, edges, labels, vec![Split::Train; n])?;
    Ok(graph.with_metadata(BTreeMap::from([(
        "generator".to_string(),
        "temporal".to_string(),
    )])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(uid: &str, label: i64) -> AgentAnnotation {
        AgentAnnotation {
            tube_uid: uid.into(),
            bbox: [0.1, 0.2, 0.3, 0.4],
            action: vec![0.0, 1.0, 0.0],
            location: vec![1.0, 0.0],
            class_label: label,
        }
    }

    fn frame(id: i64, agents: Vec<AgentAnnotation>) -> FrameAnnotation {
        FrameAnnotation {
            frame_id: id,
            agents,
        }
    }

    fn cfg(size: usize, stride: usize, step: usize) -> WindowConfig {
        WindowConfig {
            window_size: size,
            window_stride: stride,
            frame_step: step,
        }
    }

    #[test]
    fn single_frame_two_agents() {
        let frames = vec![frame(0, vec![agent("a", 0), agent("b", 1)])];
        let graphs = build_temporal_graph(&frames, &cfg(1, 1, 1)).unwrap();
        assert_eq!(graphs.len(), 1);
        let g = &graphs[0];
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges().len(), 7);
        assert_eq!(g.labels(), &[-1, 0, 1]);
        assert_eq!(g.feature_dim(), 4 + 3 + 2 + 2);
        assert_eq!(
            g.features().row(0).to_vec(),
            vec![0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0.]
        );
        assert_eq!(
            g.features().row(1).to_vec(),
            vec![0.1, 0.2, 0.3, 0.4, 0., 1., 0., 1., 0., 0., 1.]
        );
    }

    #[test]
    fn persisting_tube_gets_two_temporal_edges() {
        let frames = vec![frame(0, vec![agent("a", 0)]), frame(1, vec![agent("a", 0)])];
        let g = &build_temporal_graph(&frames, &cfg(2, 2, 1)).unwrap()[0];
        // nodes: scene0=0, a0=1, scene1=2, a1=3
        let agent_temporal: Vec<_> = g
            .edges()
            .iter()
            .filter(|&&(s, d)| s != d && g.labels()[s] >= 0 && g.labels()[d] >= 0)
            .collect();
        assert_eq!(agent_temporal, vec![&(1, 3), &(3, 1)]);
        assert!(g.edges().contains(&(0, 2)) && g.edges().contains(&(2, 0)));
    }

    #[test]
    fn road_like_windowing() {
        let frames: Vec<_> = (0..40).map(|i| frame(i, vec![agent("a", 0)])).collect();
        let graphs = build_temporal_graph(&frames, &cfg(4, 4, 5)).unwrap();
        assert_eq!(graphs.len(), 2);
        assert_eq!(graphs[0].metadata()["frame_ids"], "0,5,10,15");
        assert_eq!(graphs[1].metadata()["frame_ids"], "20,25,30,35");
    }

    #[test]
    fn empty_and_short_inputs() {
        assert!(build_temporal_graph(&[], &cfg(4, 4, 5)).unwrap().is_empty());
        let frames: Vec<_> = (0..3).map(|i| frame(i, vec![])).collect();
        assert!(build_temporal_graph(&frames, &cfg(4, 1, 1))
            .unwrap()
            .is_empty());
        assert!(build_temporal_graph(&frames, &cfg(0, 1, 1)).is_err());
    }

    #[test]
    fn frames_sorted_by_id() {
        let frames = vec![frame(5, vec![agent("x", 1)]), frame(0, vec![])];
        let g = &build_temporal_graph(&frames, &cfg(2, 1, 1)).unwrap()[0];
        assert_eq!(g.labels(), &[-1, -1, 1]);
    }

    #[test]
    fn structural_invariants_hold() {
        // Tubes come and go; uid "b" skips frame 1 and must not link 0 -> 2.
        let frames = vec![
            frame(0, vec![agent("a", 0), agent("b", 1)]),
            frame(1, vec![agent("a", 0), agent("c", 2)]),
            frame(2, vec![agent("b", 1), agent("c", 2), agent("a", 0)]),
        ];
        let g = &build_temporal_graph(&frames, &cfg(3, 1, 1)).unwrap()[0];
        // Frame index and tube uid per node, recovered from construction order.
        let frame_of = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let uid_of = ["", "a", "b", "", "a", "c", "", "b", "c", "a"];
        for v in 0..g.num_nodes() {
            assert_eq!(g.edges().iter().filter(|&&e| e == (v, v)).count(), 1);
        }
        for &(s, d) in g.edges() {
            let gap = (frame_of[s] as i64 - frame_of[d] as i64).abs();
            assert!(gap <= 1, "edge {s}->{d} spans frames");
            let both_agents = !uid_of[s].is_empty() && !uid_of[d].is_empty();
            if gap == 1 && both_agents {
                assert_eq!(uid_of[s], uid_of[d]);
            }
        }
        for v in [0, 3, 6] {
            assert_eq!(g.labels()[v], UNLABELED);
        }
    }

    #[test]
    fn rejects_malformed_annotations() {
        let mut bad = agent("a", 0);
        bad.bbox[0] = 1.5;
        assert!(build_temporal_graph(&[frame(0, vec![bad])], &cfg(1, 1, 1)).is_err());
        let mut bad = agent("a", 0);
        bad.action = vec![1.0, 1.0, 0.0];
        assert!(build_temporal_graph(&[frame(0, vec![bad])], &cfg(1, 1, 1)).is_err());
        let dup = frame(0, vec![agent("a", 0), agent("a", 1)]);
        assert!(build_temporal_graph(&[dup], &cfg(1, 1, 1)).is_err());
        let mut narrow = agent("b", 0);
        narrow.location = vec![1.0];
        let mixed = frame(0, vec![agent("a", 0), narrow]);
        assert!(build_temporal_graph(&[mixed], &cfg(1, 1, 1)).is_err());
    }
}
