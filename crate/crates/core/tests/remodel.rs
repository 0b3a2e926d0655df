use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdm_core::geometry::{Mat, PolyhedralRep, StagePolyhedron};
use ssdm_core::inventory::*;
use ssdm_core::lp::{solve_lp, LinearProgram, LpOutcome};
use ssdm_core::model::{membership_or_separator, scenario_feasible, FnSource, Membership, Scenario, SemiStochasticModel};
use ssdm_core::remodel::*;
use ssdm_core::Error;

fn instance(d: usize, k: usize, seed: u64) -> InventoryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let nominal = (0..k)
        .map(|_| StageNominal {
            demand: v(0.1, 0.4, d),
            order_cost: v(0.5, 1.5, d),
            holding_cost: v(0.0, 0.5, d),
            backlog_cost: v(0.0, 0.5, d),
            revenue: vec![0.0; d],
        })
        .collect();
    InventoryInstance {
        products: d,
        stages: k,
        z0: vec![0.3; d],
        z_lo: vec![vec![0.0; d]; k],
        z_hi: vec![vec![1.0; d]; k],
        x_lo: vec![vec![0.0; d]; k],
        x_hi: vec![vec![1.0; d]; k],
        storage_weights: vec![1.0; d],
        storage_capacity: 0.8 * d as f64,
        stage_cost_cap: vec![3.0; k],
        stage_budget_lo: vec![0.0; k],
        stage_budget_hi: vec![3.0; k],
        total_budget_lo: 0.0,
        total_budget_hi: 3.0 * k as f64,
        nominal,
        ratios: [0.7, 1.3],
    }
}

/// Empty leading block, one block per stage, the total budget last.
fn inventory_split(inst: &InventoryInstance) -> BlockSplit {
    let mut sizes = vec![0];
    sizes.extend(std::iter::repeat(2 * inst.products + 1).take(inst.stages));
    sizes.push(1);
    BlockSplit::from_sizes(&sizes).unwrap()
}

/// Bands near a plausible policy so that a fair share of draws is feasible.
fn decision(inst: &InventoryInstance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = inst.products;
    let mut view = StrategicDecisionView {
        lower: Vec::new(),
        upper: Vec::new(),
        stage_budget: Vec::new(),
        total_budget: rng.random_range(0.5..1.5) * inst.stages as f64,
    };
    for _ in 0..inst.stages {
        let l: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..0.3)).collect();
        let u: Vec<f64> = l.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
        view.lower.push(l);
        view.upper.push(u);
        view.stage_budget.push(rng.random_range(0.3..2.0));
    }
    view.to_flat()
}

fn with_extra_stage(sc: &Scenario) -> Scenario {
    let mut stages = sc.stages().to_vec();
    stages.push(Vec::new());
    Scenario::new(stages).unwrap()
}

fn in_y(model: &SemiStochasticModel, y: &[f64]) -> bool {
    matches!(membership_or_separator(model, y).unwrap(), Membership::InY)
}

fn status(model: &SemiStochasticModel, sc: &Scenario, y: &[f64]) -> bool {
    in_y(model, y) && scenario_feasible(model, sc, y).unwrap()
}

#[test]
fn identity_lift_preserves_status() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut feasible = 0;
    for case in 0..100u64 {
        let inst = instance(1 + (case % 2) as usize, 1 + (case % 3) as usize, case);
        let model = build_model(&inst).unwrap();
        let split = inventory_split(&inst);
        let basis = DecisionBasis::constant(split.num_blocks());
        let (lo, hi) = model.bounds();
        let bx = chi_box(&split, &basis, lo, hi).unwrap();
        let lifted = lift(&model, &split, &basis, Some(bx)).unwrap();
        assert_eq!(lifted.dim(), model.dim());
        assert_eq!(lifted.stages(), model.stages() + 1);
        let sc = inst_scenario(&inst, &mut rng);
        let y = decision(&inst, &mut rng);
        let chi = embed(&split, &basis, &y).unwrap();
        assert_eq!(chi, y);
        let a = status(&model, &sc, &y);
        let b = status(&lifted, &with_extra_stage(&sc), &chi);
        assert_eq!(a, b, "case {case}");
        feasible += usize::from(a);
    }
    assert!(feasible > 5 && feasible < 95, "{feasible} feasible of 100");
}

fn inst_scenario(inst: &InventoryInstance, rng: &mut ChaCha8Rng) -> Scenario {
    sample_scenario(inst, rng)
}

/// Affine stage budgets: `w_t = c + g * demand_t[0]`.
fn affine_budget_basis(inst: &InventoryInstance, split: &BlockSplit) -> DecisionBasis {
    let mut blocks = vec![vec![BasisFunction::Constant]];
    for t in 1..=inst.stages {
        blocks.push(vec![
            BasisFunction::Constant,
            BasisFunction::Coordinate {
                stage: t,
                index: 0,
                scale: 0.5,
            },
        ]);
    }
    blocks.push(vec![BasisFunction::Constant]);
    assert_eq!(blocks.len(), split.num_blocks());
    DecisionBasis { blocks }
}

#[test]
fn constant_coefficients_embed_feasible_decisions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for case in 0..100u64 {
        let inst = instance(1 + (case % 2) as usize, 1 + (case % 3) as usize, 500 + case);
        let model = build_model(&inst).unwrap();
        let split = inventory_split(&inst);
        let basis = affine_budget_basis(&inst, &split);
        let (lo, hi) = model.bounds();
        let bx = chi_box(&split, &basis, lo, hi).unwrap();
        let lifted = lift(&model, &split, &basis, Some(bx.clone())).unwrap();
        let sc = inst_scenario(&inst, &mut rng);
        let lsc = with_extra_stage(&sc);
        let y = decision(&inst, &mut rng);
        let chi = embed(&split, &basis, &y).unwrap();
        assert!(chi.iter().zip(bx.0.iter().zip(&bx.1)).all(|(c, (l, h))| l <= c && c <= h));
        // Same rows applied to y and to chi: identical witnesses.
        for t in 1..=model.stages() {
            let p = model.stage_polyhedron(t, &sc).unwrap();
            let q = lifted.stage_polyhedron(t, &lsc).unwrap();
            assert_eq!((p.b.clone(), p.c.clone(), p.d.clone()), (q.b, q.c, q.d));
            let (ay, ac) = (p.a.mul_vec(&y), q.a.mul_vec(&chi));
            assert!(ay.iter().zip(&ac).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        if status(&model, &sc, &y) {
            checked += 1;
            assert!(status(&lifted, &lsc, &chi), "case {case}");
        }
    }
    assert!(checked > 5, "only {checked} feasible cases");
}

#[test]
fn substitution_matches_rule_values() {
    let inst = instance(2, 3, 99);
    let model = build_model(&inst).unwrap();
    let split = inventory_split(&inst);
    let basis = affine_budget_basis(&inst, &split);
    let (lo, hi) = model.bounds();
    let lifted = lift(&model, &split, &basis, Some(chi_box(&split, &basis, lo, hi).unwrap())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let lsc = lifted.sample(&mut rng);
        let chi: Vec<f64> = (0..lifted.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let chi2: Vec<f64> = (0..lifted.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for t in 1..=lifted.stages() {
            let q = lifted.stage_polyhedron(t, &lsc).unwrap();
            let y = evaluate(&split, &basis, &chi, &lsc.prefix(t)[..t.min(model.stages())]).unwrap();
            let rows_y = if t <= model.stages() {
                model.stage_polyhedron(t, &lsc).unwrap().a.mul_vec(&y)
            } else {
                model.static_set().a.mul_vec(&y)
            };
            let rows_chi = q.a.mul_vec(&chi);
            for (u, v) in rows_y.iter().zip(&rows_chi) {
                assert!((u - v).abs() < 1e-12);
            }
            // Affine in chi: midpoint of the row values is the row value of the midpoint.
            let mid: Vec<f64> = chi.iter().zip(&chi2).map(|(a, b)| 0.5 * (a + b)).collect();
            let (r1, r2, rm) = (q.a.mul_vec(&chi), q.a.mul_vec(&chi2), q.a.mul_vec(&mid));
            for k in 0..rm.len() {
                assert!((0.5 * (r1[k] + r2[k]) - rm[k]).abs() < 1e-12);
            }
        }
        for t in 1..=model.stages() {
            assert_eq!(lsc.prefix(t), &lsc.stages()[..t]);
        }
    }
}

/// One stage, `y <= 2` and `y >= 0`, stage requires `y >= xi` with `xi`
/// equal to 0 or 1 with probability one half each.
fn threshold_model() -> SemiStochasticModel {
    let rep = PolyhedralRep::boxed(&[0.0], &[2.0]).unwrap();
    let source = FnSource::new(
        1,
        |rng| Scenario::new(vec![vec![if rng.random::<bool>() { 1.0 } else { 0.0 }]]).unwrap(),
        |_, prefix| {
            StagePolyhedron::new(
                Mat::from_rows(&[vec![-1.0]], 1)?,
                Mat::zeros(1, 0),
                Mat::zeros(1, 0),
                vec![-prefix[0][0]],
            )
        },
    );
    SemiStochasticModel::new(rep, vec![0.0], vec![2.0], Arc::new(source)).unwrap()
}

#[test]
fn affine_rule_strictly_enlarges() {
    let model = threshold_model();
    let split = BlockSplit::from_sizes(&[0, 1]).unwrap();
    let basis = DecisionBasis {
        blocks: vec![
            vec![BasisFunction::Constant],
            vec![
                BasisFunction::Constant,
                BasisFunction::Coordinate {
                    stage: 1,
                    index: 0,
                    scale: 1.0,
                },
            ],
        ],
    };
    let lifted = lift(&model, &split, &basis, Some((vec![0.0, -2.0], vec![2.0, 2.0]))).unwrap();
    let scenarios: Vec<Scenario> = [0.0, 1.0].iter().map(|&v| Scenario::new(vec![vec![v], vec![]]).unwrap()).collect();

    // Constant rules: feasible on both scenarios iff y >= 1.
    for (y, ok) in [(0.5, false), (0.99, false), (1.0, true), (1.5, true)] {
        let all = scenarios.iter().all(|sc| scenario_feasible(&model, &Scenario::new(vec![sc.stage(1).to_vec()]).unwrap(), &[y]).unwrap());
        assert_eq!(all, ok);
        let chi = embed(&split, &basis, &[y]).unwrap();
        assert_eq!(scenarios.iter().all(|sc| scenario_feasible(&lifted, sc, &chi).unwrap()), ok);
    }
    // The rule y(xi) = xi is feasible on both scenarios but is no embedded point.
    let chi = [0.0, 1.0];
    assert!(scenarios.iter().all(|sc| scenario_feasible(&lifted, sc, &chi).unwrap()));

    // Smallest mean rule value over both scenarios: stacked rows of both
    // lifted stage systems plus the coefficient box.
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut mean = vec![0.0; 2];
    for sc in &scenarios {
        for t in 1..=lifted.stages() {
            let q = lifted.stage_polyhedron(t, sc).unwrap();
            for r in 0..q.num_rows() {
                rows.push(q.a.row(r).to_vec());
                rhs.push(q.d[r]);
            }
        }
        mean[0] += 0.5;
        mean[1] += 0.5 * sc.stage(1)[0];
    }
    let lp = LinearProgram::new(mean, Mat::from_rows(&rows, 2).unwrap(), rhs).with_bounds(vec![0.0, -2.0], vec![2.0, 2.0]);
    let LpOutcome::Optimal(sol) = solve_lp(&lp).unwrap() else {
        panic!("lifted two-scenario program should be solvable");
    };
    assert!((sol.value - 0.5).abs() < 1e-9, "{}", sol.value);
    assert!(sol.z[1].abs() > 0.5, "optimum uses the data coefficient: {:?}", sol.z);
}

#[test]
fn lift_errors() {
    let model = threshold_model();
    let split = BlockSplit::from_sizes(&[0, 1]).unwrap();
    let basis = DecisionBasis::constant(2);
    assert!(matches!(lift(&model, &split, &basis, None), Err(Error::UnboundedChi)));
    assert!(matches!(
        lift(&model, &split, &basis, Some((vec![0.0], vec![f64::INFINITY]))),
        Err(Error::UnboundedChi)
    ));
    let three = BlockSplit::from_sizes(&[0, 1, 0]).unwrap();
    assert!(matches!(
        lift(&model, &three, &DecisionBasis::constant(3), Some((vec![0.0], vec![1.0]))),
        Err(Error::BasisDimensionMismatch(_))
    ));
    assert!(matches!(
        lift(&model, &split, &basis, Some((vec![0.0, 0.0], vec![1.0, 1.0]))),
        Err(Error::BasisDimensionMismatch(_))
    ));
    // The stage reads a block that is only known later.
    let early = BlockSplit::from_sizes(&[0, 0]).unwrap();
    let model2 = {
        let rep = PolyhedralRep::boxed(&[0.0], &[1.0]).unwrap();
        let source = FnSource::new(
            1,
            |_| Scenario::new(vec![vec![0.0]]).unwrap(),
            |_, _| StagePolyhedron::new(Mat::from_rows(&[vec![1.0]], 1)?, Mat::zeros(1, 0), Mat::zeros(1, 0), vec![1.0]),
        );
        SemiStochasticModel::new(rep, vec![0.0], vec![1.0], Arc::new(source)).unwrap()
    };
    assert!(matches!(
        lift(&model2, &early, &DecisionBasis::constant(2), Some((vec![], vec![]))),
        Err(Error::BasisDimensionMismatch(_))
    ));
    let late = BlockSplit::new(vec![0, 0, 1]).unwrap();
    let lifted = lift(&model2, &late, &DecisionBasis::constant(2), Some((vec![0.0], vec![1.0]))).unwrap();
    // Block 1 is allowed at stage 1; a two-stage source would violate it at stage 1 for block 2.
    assert!(lifted.stage_polyhedron(1, &Scenario::new(vec![vec![0.0], vec![]]).unwrap()).is_ok());
    let model3 = {
        let rep = PolyhedralRep::boxed(&[0.0], &[1.0]).unwrap();
        let source = FnSource::new(
            2,
            |_| Scenario::new(vec![vec![0.0], vec![0.0]]).unwrap(),
            |_, _| StagePolyhedron::new(Mat::from_rows(&[vec![1.0]], 1)?, Mat::zeros(1, 0), Mat::zeros(1, 0), vec![1.0]),
        );
        SemiStochasticModel::new(rep, vec![0.0], vec![1.0], Arc::new(source)).unwrap()
    };
    let split3 = BlockSplit::new(vec![0, 0, 0, 1]).unwrap();
    let lifted3 = lift(&model3, &split3, &DecisionBasis::constant(3), Some((vec![0.0], vec![1.0]))).unwrap();
    let sc = Scenario::new(vec![vec![0.0], vec![0.0], vec![]]).unwrap();
    assert!(matches!(lifted3.stage_polyhedron(1, &sc), Err(Error::ModelContractViolation(_))));
    assert!(lifted3.stage_polyhedron(2, &sc).is_ok());
}
