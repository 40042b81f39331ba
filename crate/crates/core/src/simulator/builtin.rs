//! Bundled test systems.

use std::f64::consts::PI;

use super::network::{Branch, GeneratorBus, Load, Network};
use super::system::{Admittance, PowerSystemSpec};

const OMEGA_60HZ: f64 = 2.0 * PI * 60.0;

fn line(from: usize, to: usize, r: f64, x: f64, b: f64) -> Branch {
    Branch { from, to, r, x, b, faultable: true }
}

fn transformer(from: usize, to: usize, x: f64) -> Branch {
    Branch { from, to, r: 0.0, x, b: 0.0, faultable: false }
}

fn from_network(name: &str, network: Network, h: Vec<f64>, d: Vec<f64>, pm: Vec<f64>, e: Vec<f64>) -> PowerSystemSpec {
    let n_g = network.generators.len();
    let y_pre = network.pre_fault().expect("bundled network reduces");
    let (y_fault_by_line, y_post_by_line) = (0..network.faultable_count())
        .map(|l| network.contingency_admittances(&[l]).expect("bundled N-1 reduces"))
        .unzip();
    PowerSystemSpec {
        name: name.to_string(),
        n_g,
        h,
        d,
        pm,
        e,
        y_pre,
        y_fault_by_line,
        y_post_by_line,
        omega_s: OMEGA_60HZ,
        network: Some(network),
    }
}

/// Three-machine, nine-bus system (the WSCC case on a 100 MVA base) with
/// six faultable transmission lines.
pub fn three_machine() -> PowerSystemSpec {
    let network = Network {
        buses: 9,
        branches: vec![
            transformer(0, 3, 0.0576),
            transformer(1, 6, 0.0625),
            transformer(2, 8, 0.0586),
            line(3, 4, 0.010, 0.085, 0.176),
            line(3, 5, 0.017, 0.092, 0.158),
            line(6, 4, 0.032, 0.161, 0.306),
            line(8, 5, 0.039, 0.170, 0.358),
            line(6, 7, 0.0085, 0.072, 0.149),
            line(8, 7, 0.0119, 0.1008, 0.209),
        ],
        loads: vec![
            Load { bus: 4, p: 1.25, q: 0.50, v: 0.9956 },
            Load { bus: 5, p: 0.90, q: 0.30, v: 1.0127 },
            Load { bus: 7, p: 1.00, q: 0.35, v: 1.0159 },
        ],
        generators: vec![
            GeneratorBus { bus: 0, xd: 0.0608 },
            GeneratorBus { bus: 1, xd: 0.1198 },
            GeneratorBus { bus: 2, xd: 0.1813 },
        ],
    };
    from_network(
        "three_machine",
        network,
        vec![23.64, 6.40, 3.01],
        vec![9.6, 2.6, 1.2],
        vec![0.716, 1.63, 0.85],
        vec![1.0566, 1.0502, 1.0170],
    )
}

/// Synthetic nine-machine, eighteen-bus meshed system. Generator buses are
/// 0..9, each stepped up to high-voltage bus `9 + i`.
pub fn nine_machine() -> PowerSystemSpec {
    let mut branches: Vec<Branch> = (0..9).map(|i| transformer(i, 9 + i, 0.05 + 0.005 * (i % 3) as f64)).collect();
    let ring = [
        (9, 10, 0.016, 0.140, 0.14),
        (10, 11, 0.020, 0.170, 0.17),
        (11, 12, 0.024, 0.190, 0.19),
        (12, 13, 0.018, 0.160, 0.16),
        (13, 14, 0.022, 0.180, 0.18),
        (14, 15, 0.020, 0.150, 0.15),
        (15, 16, 0.026, 0.200, 0.20),
        (16, 17, 0.018, 0.164, 0.16),
        (17, 9, 0.024, 0.184, 0.18),
        (9, 13, 0.015, 0.120, 0.24),
        (11, 15, 0.014, 0.115, 0.23),
        (12, 16, 0.016, 0.125, 0.25),
        (10, 14, 0.015, 0.118, 0.24),
    ];
    branches.extend(ring.iter().map(|&(f, t, r, x, b)| line(f, t, r, x, b)));
    let loads = [(10, 1.82), (11, 1.43), (12, 1.17), (13, 1.69), (14, 1.30), (15, 1.56), (16, 1.04), (17, 1.43)]
        .iter()
        .map(|&(bus, p)| Load { bus, p, q: 0.3 * p, v: 1.0 })
        .collect();
    let generators = (0..9)
        .map(|i| GeneratorBus { bus: i, xd: [0.10, 0.14, 0.18, 0.12, 0.16, 0.20, 0.13, 0.11, 0.22][i] })
        .collect();
    let network = Network { buses: 18, branches, loads, generators };
    let h = vec![12.0, 5.5, 4.0, 6.5, 4.8, 3.2, 5.0, 8.0, 3.5];
    let d = h.iter().map(|h| 0.2 * h).collect();
    from_network(
        "nine_machine",
        network,
        h,
        d,
        vec![1.287, 1.416, 1.030, 1.544, 1.158, 0.901, 1.287, 1.673, 0.772],
        vec![1.06, 1.05, 1.04, 1.06, 1.05, 1.03, 1.05, 1.07, 1.03],
    )
}

/// Single machine against an infinite bus. Machine 0 is the bus (very large
/// inertia), machine 1 the generator; `p_max = E_0·E_1/x`.
pub fn single_machine_infinite_bus(h: f64, d: f64, p_max: f64, pm: f64) -> PowerSystemSpec {
    let mut y = Admittance::zeros(2);
    let b = p_max;
    y.set(0, 0, num_complex::Complex64::new(0.0, -b));
    y.set(1, 1, num_complex::Complex64::new(0.0, -b));
    y.set(0, 1, num_complex::Complex64::new(0.0, b));
    y.set(1, 0, num_complex::Complex64::new(0.0, b));
    PowerSystemSpec {
        name: "smib".into(),
        n_g: 2,
        h: vec![1e9, h],
        d: vec![0.0, d],
        pm: vec![0.0, pm],
        e: vec![1.0, 1.0],
        y_pre: y.clone(),
        y_fault_by_line: vec![],
        y_post_by_line: vec![],
        omega_s: OMEGA_60HZ,
        network: None,
    }
}

/// Resolves `builtin:<name>` identifiers.
pub fn by_name(name: &str) -> Option<PowerSystemSpec> {
    match name {
        "three_machine" => Some(three_machine()),
        "nine_machine" => Some(nine_machine()),
        _ => None,
    }
}
