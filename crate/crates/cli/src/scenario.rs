//! Runnable presets for the worked examples, each bundled with its expected
//! outcome and a tag saying where that expectation comes from.

use bc_core::{BranchChoice, BranchPolicy, Configuration, Kernel, ModelSpec};

/// Where an expected value comes from: an exact analytic argument, an
/// independent numerical derivation, or direct inspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Derived,
    Elementary,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Analytic => "analytic",
            Source::Derived => "derived",
            Source::Elementary => "elementary",
        })
    }
}

/// Which solution notion the preset exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolutionKind {
    Caratheodory,
    Krasovsky,
}

impl std::fmt::Display for SolutionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolutionKind::Caratheodory => "caratheodory",
            SolutionKind::Krasovsky => "krasovsky",
        })
    }
}

/// One verifiable expectation attached to a preset.
#[derive(Clone, Debug)]
pub struct Check {
    pub label: &'static str,
    pub source: Source,
    pub kind: CheckKind,
}

#[derive(Clone, Debug)]
pub enum CheckKind {
    /// every computed branch terminal matches exactly one of these rows
    /// (flattened coordinates), coordinatewise within `tol`
    TerminalSet { states: Vec<Vec<f64>>, tol: f64 },
    /// the run produces exactly this many branches
    BranchCount(usize),
    /// the first event of the primary branch happens at this time
    EventTime { time: f64, tol: f64 },
    /// cluster partition at the primary branch terminal
    ClusterBlocks {
        blocks: Vec<Vec<usize>>,
        cluster_point: bool,
    },
    /// distance between two terminal block representatives
    BlockDistance {
        a: usize,
        b: usize,
        distance: f64,
        tol: f64,
    },
    /// the pointwise field is exactly zero at the initial state
    InitialPointwiseRest(bool),
    /// zero velocity lies in the limit hull at the initial state
    InitialHullRest(bool),
    /// the initial state is (or is not) a cluster point
    InitialClusterPoint(bool),
    /// the energy (V for metric, W for ranked neighbors) stays non-increasing
    /// along the primary branch; when a failure is expected,
    /// `min_positive_fraction` demands that many strictly increasing steps
    EnergyMonotone {
        expect_pass: bool,
        min_positive_fraction: Option<f64>,
    },
    /// energy value at the initial state
    InitialEnergy { value: f64, tol: f64 },
    /// the opinion average stays within `tol` of its initial value
    AveragePreserved { tol: f64 },
    /// shape of the interaction graph at the initial state
    Structure {
        edges: Option<Vec<(usize, usize)>>,
        components: Option<usize>,
        mutual_pair: Option<(usize, usize)>,
    },
}

/// A named, self-contained run with its expected outcomes.
#[derive(Clone, Debug)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub about: &'static str,
    pub model: ModelSpec,
    pub kernel: Kernel,
    pub x0: Configuration,
    pub solution: SolutionKind,
    pub policy: BranchPolicy,
    pub horizon: f64,
    pub checks: Vec<Check>,
}

fn line(values: &[f64]) -> Configuration {
    Configuration::from_scalars(0.0, values).expect("preset initial state is valid")
}

fn plane(rows: &[Vec<f64>]) -> Configuration {
    Configuration::from_rows(0.0, rows).expect("preset initial state is valid")
}

fn enumerate_default() -> BranchPolicy {
    BranchPolicy::default()
}

fn fixed(choices: Vec<BranchChoice>) -> BranchPolicy {
    BranchPolicy::Fixed { choices }
}

/// All presets, in listing order.
pub fn presets() -> Vec<ScenarioPreset> {
    const ONE: Kernel = Kernel::Constant(1.0);
    let mut out = Vec::new();

    out.push(ScenarioPreset {
        name: "ex-metric-inclusions",
        about: "three distinct generalized solutions from one metric start",
        model: ModelSpec::metric(),
        kernel: ONE,
        x0: line(&[-1.0 / 3.0, 0.0, 1.0]),
        solution: SolutionKind::Krasovsky,
        policy: enumerate_default(),
        horizon: 30.0,
        checks: vec![
            Check {
                label: "3 branches",
                source: Source::Derived,
                kind: CheckKind::BranchCount(3),
            },
            Check {
                label: "terminals (-1/6,-1/6,1), (2/9,2/9,2/9), (-1/9,-1/9,8/9)",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![
                        vec![-1.0 / 6.0, -1.0 / 6.0, 1.0],
                        vec![2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0],
                        vec![-1.0 / 9.0, -1.0 / 9.0, 8.0 / 9.0],
                    ],
                    tol: 1e-3,
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-topological-inclusions",
        about: "three distinct generalized solutions from one nearest-neighbor tie",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: line(&[0.0, -1.0, 1.0]),
        solution: SolutionKind::Krasovsky,
        policy: enumerate_default(),
        horizon: 30.0,
        checks: vec![
            Check {
                label: "3 branches",
                source: Source::Derived,
                kind: CheckKind::BranchCount(3),
            },
            Check {
                label: "terminals (-1/2,..), (1/2,..), (0,0,0)",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![
                        vec![-0.5, -0.5, -0.5],
                        vec![0.5, 0.5, 0.5],
                        vec![0.0, 0.0, 0.0],
                    ],
                    tol: 1e-3,
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-clusters-at-distance-1",
        about: "metric clusters settle exactly one radius apart",
        model: ModelSpec::metric(),
        kernel: ONE,
        x0: plane(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0 / 3.0],
            vec![1.0, -1.0 / 3.0],
        ]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 12.0,
        checks: vec![
            Check {
                label: "blocks {1}, {2,3}, cluster point",
                source: Source::Analytic,
                kind: CheckKind::ClusterBlocks {
                    blocks: vec![vec![0], vec![1, 2]],
                    cluster_point: true,
                },
            },
            Check {
                label: "block distance 1",
                source: Source::Analytic,
                kind: CheckKind::BlockDistance {
                    a: 0,
                    b: 1,
                    distance: 1.0,
                    tol: 1e-3,
                },
            },
            Check {
                label: "average preserved",
                source: Source::Derived,
                kind: CheckKind::AveragePreserved { tol: 1e-6 },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-metric-contact",
        about: "outer pair reaches the interaction radius and crosses to consensus",
        model: ModelSpec::metric(),
        kernel: ONE,
        x0: line(&[-2.0 / 3.0, 0.0, 2.0 / 3.0]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 6.0,
        checks: vec![
            Check {
                label: "contact at t = ln(4/3)",
                source: Source::Analytic,
                kind: CheckKind::EventTime {
                    time: (4.0f64 / 3.0).ln(),
                    tol: 1e-6,
                },
            },
            Check {
                label: "terminal (0,0,0)",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![vec![0.0, 0.0, 0.0]],
                    tol: 1e-6,
                },
            },
            Check {
                label: "average preserved",
                source: Source::Derived,
                kind: CheckKind::AveragePreserved { tol: 1e-6 },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-topological-contact",
        about: "two switching surfaces reached at once fork three admissible branches",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: plane(&[
            vec![-1.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.75, 15.0f64.sqrt() / 4.0],
        ]),
        solution: SolutionKind::Krasovsky,
        policy: enumerate_default(),
        horizon: 1.0,
        checks: vec![Check {
            label: "3 branches (one sign product inadmissible)",
            source: Source::Derived,
            kind: CheckKind::BranchCount(3),
        }],
    });

    out.push(ScenarioPreset {
        name: "ex-nonconv-k2",
        about: "2-nearest dynamics settle at a rest point that is not a cluster point",
        model: ModelSpec::topological(2),
        kernel: ONE,
        x0: line(&[-9.0, -9.0, -9.0, -2.0, 2.0, 9.0, 9.0, 9.0]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 12.0,
        checks: vec![
            Check {
                label: "terminal (-9,-9,-9,-3,3,9,9,9)",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![vec![-9.0, -9.0, -9.0, -3.0, 3.0, 9.0, 9.0, 9.0]],
                    tol: 1e-6,
                },
            },
            Check {
                label: "blocks {1,2,3},{4},{5},{6,7,8}, not a cluster point",
                source: Source::Analytic,
                kind: CheckKind::ClusterBlocks {
                    blocks: vec![vec![0, 1, 2], vec![3], vec![4], vec![5, 6, 7]],
                    cluster_point: false,
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-krasovsky-eq-not-cluster",
        about: "hull-stationary tie state that no pointwise rest test accepts",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: line(&[-1.0, 1.0, 0.0, 1.0, -1.0]),
        solution: SolutionKind::Krasovsky,
        policy: enumerate_default(),
        horizon: 10.0,
        checks: vec![
            Check {
                label: "zero velocity in the limit hull at t=0",
                source: Source::Analytic,
                kind: CheckKind::InitialHullRest(true),
            },
            Check {
                label: "pointwise field nonzero at t=0",
                source: Source::Elementary,
                kind: CheckKind::InitialPointwiseRest(false),
            },
            Check {
                label: "initial state is not a cluster point",
                source: Source::Elementary,
                kind: CheckKind::InitialClusterPoint(false),
            },
            Check {
                label: "2 moving branches",
                source: Source::Derived,
                kind: CheckKind::BranchCount(2),
            },
            Check {
                label: "terminals (-1,1,-1,1,-1) and (-1,1,1,1,-1)",
                source: Source::Derived,
                kind: CheckKind::TerminalSet {
                    states: vec![
                        vec![-1.0, 1.0, -1.0, 1.0, -1.0],
                        vec![-1.0, 1.0, 1.0, 1.0, -1.0],
                    ],
                    tol: 1e-3,
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-merging-components",
        about: "a tie start where one branch joins the two interaction components",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: line(&[-1.0, 0.0, 1.0, 1.0]),
        solution: SolutionKind::Krasovsky,
        policy: enumerate_default(),
        horizon: 20.0,
        checks: vec![
            Check {
                label: "2 components at t=0",
                source: Source::Elementary,
                kind: CheckKind::Structure {
                    edges: None,
                    components: Some(2),
                    mutual_pair: None,
                },
            },
            Check {
                label: "2 branches (components kept or merged)",
                source: Source::Derived,
                kind: CheckKind::BranchCount(2),
            },
            Check {
                label: "terminals (-1/2,-1/2,1,1) and (1,1,1,1)",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![
                        vec![-0.5, -0.5, 1.0, 1.0],
                        vec![1.0, 1.0, 1.0, 1.0],
                    ],
                    tol: 1e-6,
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-w-increasing-k2",
        about: "ranked-neighbor energy W rises along a 2-nearest run",
        model: ModelSpec::topological(2),
        kernel: ONE,
        x0: line(&[-9.0, -9.0, -9.0, -2.0, 2.0, 9.0, 9.0, 9.0]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 3.0,
        checks: vec![
            Check {
                label: "W(t=0) = 65",
                source: Source::Analytic,
                kind: CheckKind::InitialEnergy {
                    value: 65.0,
                    tol: 0.0,
                },
            },
            Check {
                label: "W increases on >90% of steps",
                source: Source::Analytic,
                kind: CheckKind::EnergyMonotone {
                    expect_pass: false,
                    min_positive_fraction: Some(0.9),
                },
            },
        ],
    });

    let y0 = 1.0 / 34.0;
    out.push(ScenarioPreset {
        name: "ex-w-increasing-krasovsky",
        about: "sliding branch raises W despite a kept symmetry",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: line(&[-1.0 - y0, -1.0 + y0, 0.0, 1.0 - y0, 1.0 + y0]),
        solution: SolutionKind::Krasovsky,
        policy: fixed(vec![BranchChoice::Slide { exit_time: None }]),
        horizon: 5.0,
        checks: vec![
            Check {
                label: "single sliding branch",
                source: Source::Elementary,
                kind: CheckKind::BranchCount(1),
            },
            Check {
                label: "offsets shrink by e^{-2t}",
                source: Source::Analytic,
                kind: CheckKind::TerminalSet {
                    states: vec![{
                        let y = y0 * (-10.0f64).exp();
                        vec![-1.0 - y, -1.0 + y, 0.0, 1.0 - y, 1.0 + y]
                    }],
                    tol: 1e-5,
                },
            },
            Check {
                label: "W increases on >90% of steps",
                source: Source::Analytic,
                kind: CheckKind::EnergyMonotone {
                    expect_pass: false,
                    min_positive_fraction: Some(0.9),
                },
            },
        ],
    });

    out.push(ScenarioPreset {
        name: "ex-pseudoforest-line",
        about: "six agents on a line: one component, one mutual pair",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: line(&[0.0, 10.0, 19.0, 27.0, 28.0, 30.0]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 1.0,
        checks: vec![Check {
            label: "chain 1>2>3>4<>5<6 with the pair {4,5}",
            source: Source::Analytic,
            kind: CheckKind::Structure {
                edges: Some(vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 3), (5, 4)]),
                components: Some(1),
                mutual_pair: Some((3, 4)),
            },
        }],
    });

    out.push(ScenarioPreset {
        name: "ex-pseudoforest-2d",
        about: "eight agents in the plane: one component around the pair {1,5}",
        model: ModelSpec::topological(1),
        kernel: ONE,
        x0: plane(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.5, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
        ]),
        solution: SolutionKind::Caratheodory,
        policy: enumerate_default(),
        horizon: 1.0,
        checks: vec![Check {
            label: "one component, mutual pair {1,5}",
            source: Source::Derived,
            kind: CheckKind::Structure {
                edges: None,
                components: Some(1),
                mutual_pair: Some((0, 4)),
            },
        }],
    });

    out
}

/// Look a preset up by exact name.
pub fn find(name: &str) -> Option<ScenarioPreset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Compact one-line rendering of the initial state for small presets.
pub fn initial_summary(x0: &Configuration) -> String {
    let n = x0.n_agents();
    let dim = x0.dim();
    if n * dim <= 10 {
        let rows: Vec<String> = (0..n)
            .map(|i| {
                let row: Vec<String> = x0.agent(i).iter().map(|v| format!("{v}")).collect();
                if dim == 1 {
                    row.join("")
                } else {
                    format!("({})", row.join(","))
                }
            })
            .collect();
        format!("({})", rows.join(","))
    } else {
        format!("N={n} in {dim}D")
    }
}
