use powerdiag_web::{equal_mass_weights, lloyd, power_cells};

fn records(flat: &[f64]) -> Vec<(usize, f64, Vec<[f64; 2]>)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < flat.len() {
        let n = flat[k + 2] as usize;
        let pts = (0..n).map(|j| [flat[k + 3 + 2 * j], flat[k + 4 + 2 * j]]).collect();
        out.push((flat[k] as usize, flat[k + 1], pts));
        k += 3 + 2 * n;
    }
    out
}

fn shoelace(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| p[i][0] * p[(i + 1) % n][1] - p[(i + 1) % n][0] * p[i][1]).sum::<f64>().abs()
}

#[test]
fn quadrant_cells_are_ordered_squares() {
    let pts = [0.25, 0.25, 0.75, 0.25, 0.25, 0.75, 0.75, 0.75];
    let cells = records(&power_cells(&pts, &[0.0; 4], "uniform").unwrap());
    assert_eq!(cells.len(), 4);
    for (i, (site, mass, ring)) in cells.iter().enumerate() {
        assert_eq!(*site, i);
        assert_eq!(ring.len(), 4);
        assert!((mass - 0.25).abs() < 1e-14);
        // a correctly ordered ring has the same area as the cell
        assert!((shoelace(ring) - 0.25).abs() < 1e-14);
    }
}

#[test]
fn lloyd_converges_single_site() {
    let out = lloyd(&[0.1, 0.9], "uniform", 1).unwrap();
    assert!((out[0] - 0.5).abs() < 1e-14 && (out[1] - 0.5).abs() < 1e-14);
}

#[test]
fn equal_mass_weights_balance_cells() {
    let pts = [0.2, 0.3, 0.7, 0.4, 0.5, 0.8, 0.35, 0.6];
    let w = equal_mass_weights(&pts, "sphere", 100).unwrap();
    let cells = records(&power_cells(&pts, &w, "sphere").unwrap());
    let total: f64 = cells.iter().map(|c| c.1).sum();
    for c in &cells {
        assert!((c.1 - total / 4.0).abs() < 1e-6 * total, "{}", c.1);
    }
}

#[test]
fn bad_inputs_are_errors() {
    assert!(power_cells(&[0.1, 0.2, 0.3], &[0.0], "uniform").is_err());
    assert!(lloyd(&[0.1, 0.2], "plasma", 1).is_err());
}
