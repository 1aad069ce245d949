//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line (run with `--nocapture` to see them).

mod common;

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blockconv::block::{
    block_conv2d, blocked_forward, mac_count_blocked, solve_block_padding, split_blocks,
    BlockGrid, BlockPadding,
};
use blockconv::graph::{feature_map_volumes, preset, MapShape, VolumeUnit};
use blockconv::planner::{
    estimate_cycles, explore, fusion_blocking_plan, fusion_units, plan_layout, plan_score,
    BlockingStyle, ExploreConfig, FusionPlan, HardwareBudget,
};
use blockconv::sim::{
    simulate_baseline_shapes, simulate_fused, simulate_fused_shapes, verify_equivalence,
    BaselineOptions, FusedOptions, Tiling, VerifyResult,
};
use blockconv::{
    conv2d_ref, mac_count, ConvParams, Dims, NetWeights, PadMode, PadSpec, ScalarFormat, Tensor4D,
};

use common::{naive_pad, random_small_net, RawTensor};

fn f8() -> ScalarFormat {
    ScalarFormat::fixed(8, 4).unwrap()
}

#[test]
fn criterion_01_blocked_8x8_shape_and_operation_parity() {
    let start = Instant::now();
    let input = Tensor4D::seeded_random(Dims::new(1, 3, 8, 8), f8(), 101);
    let weights = Tensor4D::seeded_random(Dims::new(1, 3, 3, 3), f8(), 102);
    let grid = BlockGrid::even(8, 8, 2, 2).unwrap();
    let bpad = BlockPadding::solve(&grid, 3, 1, 1, PadMode::Zero).unwrap();
    assert!(bpad.per_block.iter().all(|p| *p == PadSpec::uniform(1)));

    let out = block_conv2d(&input, &weights, None, &grid, &bpad, 1, false).unwrap();
    assert_eq!(out.dims, Dims::new(1, 1, 8, 8));

    let blocked = mac_count_blocked(3, &grid, &bpad, 1, 3, 1, false).unwrap();
    let dense = mac_count(3, 8, 8, 1, 3, 1, PadSpec::uniform(1), false).unwrap();
    assert_eq!(blocked.kernel_applications, 192);
    assert_eq!(dense.kernel_applications, 192);
    assert_eq!(blocked, dense);
    assert!(start.elapsed().as_secs() < 1);
    println!("criterion 1 (blocked 8x8 shape and operation parity): PASS");
}

#[test]
fn criterion_02_degenerate_blocking_is_bit_exact() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    for trial in 0..100u64 {
        let h = rng.random_range(4..=12);
        let w = rng.random_range(4..=12);
        let cin = rng.random_range(1..=4);
        let cout = rng.random_range(1..=4);
        let choices: Vec<usize> = [1, 3, 5].into_iter().filter(|&k| k <= h.min(w)).collect();
        let k = choices[rng.random_range(0..choices.len())];
        let p = rng.random_range(0..k);
        let input = Tensor4D::seeded_random(Dims::new(1, cin, h, w), f8(), 3000 + trial);
        let wfmt = ScalarFormat::fixed(8, 3).unwrap();
        let weights = Tensor4D::seeded_random(Dims::new(cout, cin, k, k), wfmt, 4000 + trial);

        // trivial 1x1 grid with the original padding
        let grid = BlockGrid::whole(h, w);
        let bpad = BlockPadding::uniform(PadMode::Zero, PadSpec::uniform(p), 1);
        let blocked = block_conv2d(&input, &weights, None, &grid, &bpad, 1, false).unwrap();
        let dense = conv2d_ref(&input, &weights, None, &ConvParams::uniform(1, p)).unwrap();
        assert_eq!(blocked, dense, "1x1 grid, trial {trial}");

        // pointwise kernel under an arbitrary grid
        let rows = rng.random_range(1..=h.min(4));
        let cols = rng.random_range(1..=w.min(4));
        let grid = BlockGrid::even(h, w, rows, cols).unwrap();
        let pw = Tensor4D::seeded_random(Dims::new(cout, cin, 1, 1), wfmt, 5000 + trial);
        let bpad = BlockPadding::solve(&grid, 1, 1, 0, PadMode::Zero).unwrap();
        let blocked = block_conv2d(&input, &pw, None, &grid, &bpad, 1, false).unwrap();
        let dense = conv2d_ref(&input, &pw, None, &ConvParams::uniform(1, 0)).unwrap();
        assert_eq!(blocked, dense, "pointwise grid {rows}x{cols}, trial {trial}");
    }
    assert!(start.elapsed().as_secs() < 30);
    println!("criterion 2 (degenerate blocking bit-exact, 100 seeds): PASS");
}

#[test]
fn criterion_03_zeroing_one_block_perturbs_only_that_output_block() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..50u64 {
        // every fourth trial uses the uneven 41x41 -> 28/13 grid
        let (h, w, grid) = if trial % 4 == 0 {
            (41, 41, BlockGrid::tiled(41, 41, 28, 28).unwrap())
        } else {
            let h = rng.random_range(6..=20);
            let w = rng.random_range(6..=20);
            let rows = rng.random_range(2..=3.min(h / 2));
            let cols = rng.random_range(2..=3.min(w / 2));
            (h, w, BlockGrid::even(h, w, rows, cols).unwrap())
        };
        let c = rng.random_range(1..=2);
        let input = Tensor4D::seeded_random(Dims::new(1, c, h, w), f8(), 7000 + trial);
        let weights = Tensor4D::seeded_random(Dims::new(2, c, 3, 3), f8(), 8000 + trial);
        let bpad = BlockPadding::solve(&grid, 3, 1, 1, PadMode::Zero).unwrap();
        let base = block_conv2d(&input, &weights, None, &grid, &bpad, 1, false).unwrap();

        let target = rng.random_range(0..grid.block_count());
        let (bi, bj) = (target / grid.cols(), target % grid.cols());
        let mut perturbed = input.clone();
        let (r0, rh) = grid.row_bands()[bi];
        let (c0, cw) = grid.col_bands()[bj];
        if let blockconv::TensorData::Fixed(d) = &mut perturbed.data {
            for ch in 0..c {
                for row in r0..r0 + rh {
                    for col in c0..c0 + cw {
                        d[((ch) * h + row) * w + col] = 0;
                    }
                }
            }
        }
        let out = block_conv2d(&perturbed, &weights, None, &grid, &bpad, 1, false).unwrap();
        let before = split_blocks(&base, &grid_of_output(&base, &grid)).unwrap();
        let after = split_blocks(&out, &grid_of_output(&out, &grid)).unwrap();
        for (idx, (b, a)) in before.iter().zip(&after).enumerate() {
            if idx == target {
                continue; // the zeroed block's own output may change
            }
            assert_eq!(b, a, "trial {trial}: block {idx} changed");
        }
    }
    assert!(start.elapsed().as_secs() < 30);
    println!("criterion 3 (block independence under zero padding, 50 seeds): PASS");
}

/// For same convolutions the output grid mirrors the input grid.
fn grid_of_output(out: &Tensor4D, grid: &BlockGrid) -> BlockGrid {
    let g = BlockGrid::from_bands(&grid.row_band_sizes(), &grid.col_band_sizes()).unwrap();
    assert_eq!(g.extent(), (out.dims.h, out.dims.w));
    g
}

#[test]
fn criterion_04_padding_solver_and_shape_law() {
    assert_eq!(solve_block_padding(8, 3, 1, 1, 2).unwrap(), (1, 1));
    assert_eq!(solve_block_padding(16, 1, 1, 0, 4).unwrap(), (0, 0));
    assert_eq!(solve_block_padding(28, 3, 1, 1, 1).unwrap(), (1, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(2..=8);
        let extent = n * m;
        let k = [1usize, 3, 5][rng.random_range(0..3)];
        if extent < k {
            continue;
        }
        let p = if k == 1 { 0 } else { (k - 1) / 2 };
        let Ok(pad) = solve_block_padding(extent, k, 1, p, n) else {
            continue;
        };
        let cin = rng.random_range(1..=2);
        let input = Tensor4D::seeded_random(Dims::new(1, cin, extent, extent), f8(), 9000 + checked);
        let weights = Tensor4D::seeded_random(Dims::new(1, cin, k, k), f8(), 9500 + checked);
        let grid = BlockGrid::even(extent, extent, n, n).unwrap();
        let bpad = BlockPadding::uniform(
            PadMode::Zero,
            PadSpec::new(pad.0, pad.1, pad.0, pad.1),
            grid.block_count(),
        );
        let out = block_conv2d(&input, &weights, None, &grid, &bpad, 1, false).unwrap();
        let expect = extent + 2 * p - k + 1;
        assert_eq!(out.dims, Dims::new(1, 1, expect, expect), "extent {extent} k {k} n {n}");
        checked += 1;
    }
    println!("criterion 4 (split-equation solver and concat shape law, 100 configs): PASS");
}

#[test]
fn criterion_05_feature_map_volumes() {
    let vgg = preset("vgg16-conv").unwrap();
    let volumes = feature_map_volumes(&vgg).unwrap();
    let conv1_1 = volumes.iter().find(|v| v.id == "conv1_1").unwrap();
    let mbits = VolumeUnit::Mbits.convert(conv1_1.bits);
    assert!((mbits - 49.0).abs() <= 0.1, "conv1_1 at 16 bits: {mbits} Mbits");

    let vdsr = preset("vdsr").unwrap();
    let volumes = feature_map_volumes(&vdsr).unwrap();
    let mid = volumes.iter().find(|v| v.id == "conv10").unwrap();
    let mbytes = VolumeUnit::MBytes.convert(mid.bits);
    assert!((mbytes - 126.56).abs() <= 0.1, "middle layer at 8 bits: {mbytes} MB");
    println!("criterion 5 (feature-map volume analysis): PASS");
}

#[test]
fn criterion_06_transfer_size_accounting() {
    // full-resolution traffic in shapes-only mode
    let vdsr = preset("vdsr").unwrap();
    let start = Instant::now();
    let opts = BaselineOptions {
        fuse_head: true,
        host_residual_output: true,
        ..BaselineOptions::new(Tiling { t_r: 27, t_c: 48, t_m: 64, t_n: 64 })
    };
    let (baseline_traffic, _) = simulate_baseline_shapes(&vdsr, &opts).unwrap();
    let baseline_mbits = baseline_traffic.fmap_total_mbits();
    assert!(
        (baseline_mbits - 36481.64).abs() <= 0.01,
        "baseline feature-map traffic {baseline_mbits} Mbits"
    );

    let budget = HardwareBudget { bram_bits: 20_090_880, n_pe: 8, activation_bits: 8, weight_buffer_bits: 4 << 20 };
    let plan = FusionPlan::single_group(&vdsr, (27, 48), BlockingStyle::Fixed);
    let blocking = fusion_blocking_plan(&vdsr, &plan).unwrap();
    let (fused_traffic, _) =
        simulate_fused_shapes(&vdsr, &plan, &blocking, &budget, FusedOptions::default()).unwrap();
    let fused_mbits = fused_traffic.fmap_total_mbits();
    assert!((fused_mbits - 31.64).abs() <= 0.01, "fused feature-map traffic {fused_mbits} Mbits");
    assert_eq!(fused_traffic.intermediate_total_bits(), 0);
    assert!(start.elapsed().as_secs() < 5, "shapes-only accounting took {:?}", start.elapsed());

    // bit-exact equivalence at reduced resolution
    let mut reduced = vdsr.clone();
    reduced.input_shape = MapShape::new(1, 108, 192);
    let weights = NetWeights::seeded(&reduced, 606).unwrap();
    let input = Tensor4D::seeded_random(Dims::new(1, 1, 108, 192), reduced.activation_format, 607);
    let plan = FusionPlan::single_group(&reduced, (27, 48), BlockingStyle::Fixed);
    let blocking = fusion_blocking_plan(&reduced, &plan).unwrap();
    let sim = simulate_fused(&reduced, &weights, &input, &plan, &blocking, &budget, FusedOptions::default()).unwrap();
    assert_eq!(sim.traffic.intermediate_total_bits(), 0);
    let reference = blocked_forward(&reduced, &weights, &input, &blocking).unwrap();
    assert_eq!(verify_equivalence(&sim.output, &reference).unwrap(), VerifyResult::Pass);
    println!("criterion 6 (transfer-size accounting, 36481.64 vs 31.64 Mbits): PASS");
}

#[test]
fn criterion_07_cycle_model_against_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut halving_checked = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=96u64);
        let n_ch = rng.random_range(1..=96u64);
        let r = rng.random_range(1..=64u64);
        let c = rng.random_range(1..=64u64);
        let k = [1u64, 3, 5, 7][rng.random_range(0..4)];
        let t_r = rng.random_range(1..=r);
        let t_c = rng.random_range(1..=c);
        let t_m = rng.random_range(1..=m);
        let t_n = rng.random_range(1..=n_ch);
        let n_pe = [1u64, 2, 3, 4, 8][rng.random_range(0..5)];

        let got = estimate_cycles(m, n_ch, r, c, k, t_r, t_c, t_m, t_n, n_pe).unwrap();
        // direct evaluation: ceil-divided phase count times the padded
        // tile sweep, spread across PEs
        let phases = m.div_ceil(t_m) * n_ch.div_ceil(t_n) * r.div_ceil(t_r) * c.div_ceil(t_c);
        let work = phases * (t_r + k - 1) * (t_c + k - 1) * t_m;
        assert_eq!(got, work.div_ceil(n_pe));

        if work.is_multiple_of(2 * n_pe) {
            let doubled = estimate_cycles(m, n_ch, r, c, k, t_r, t_c, t_m, t_n, 2 * n_pe).unwrap();
            assert_eq!(got, 2 * doubled, "halving at n_pe {n_pe}");
            halving_checked += 1;
        }
    }
    assert!(halving_checked > 50, "only {halving_checked} divisible halving cases sampled");
    println!("criterion 7 (cycle model vs direct evaluation, 1000 tuples): PASS");
}

#[test]
fn criterion_08_planner_feasibility_and_tile_table() {
    let mut vgg = preset("vgg16-conv").unwrap();
    vgg.activation_format = f8();
    vgg.weight_format = f8();
    let budget = HardwareBudget::zc706(4, 8, 8 << 20);
    let tiles = [(14, 14), (28, 14), (28, 28)];
    let result = explore(&vgg, &budget, &tiles, &ExploreConfig::default()).unwrap();

    // at least one plan fits on-chip with zero intermediate traffic
    let full_fusion = result
        .plans
        .iter()
        .find(|p| p.fits_onchip && p.plan.groups.len() == 1)
        .expect("a feasible single-group plan exists");
    let blocking = fusion_blocking_plan(&vgg, &full_fusion.plan).unwrap();
    let (traffic, _) =
        simulate_fused_shapes(&vgg, &full_fusion.plan, &blocking, &budget, FusedOptions::default()).unwrap();
    assert_eq!(traffic.intermediate_total_bits(), 0, "plan {}", full_fusion.id);

    // stage-aligned grouping with a constant 14x14 tile assigns every conv
    // layer the same block size, layer for layer
    let t = (14, 14);
    let plan = FusionPlan::from_unit_counts(
        &vgg,
        BlockingStyle::Fixed,
        &[(2, t), (2, t), (3, t), (3, t), (3, t)],
    )
    .unwrap();
    assert_eq!(plan.grouping_string(&vgg), "2,2,3,3,3");
    let layout = plan_layout(&vgg, &plan).unwrap();
    let expected = [
        ("conv1_1", (14, 14)),
        ("conv1_2", (14, 14)),
        ("conv2_1", (14, 14)),
        ("conv2_2", (14, 14)),
        ("conv3_1", (14, 14)),
        ("conv3_2", (14, 14)),
        ("conv3_3", (14, 14)),
        ("conv4_1", (14, 14)),
        ("conv4_2", (14, 14)),
        ("conv4_3", (14, 14)),
        ("conv5_1", (14, 14)),
        ("conv5_2", (14, 14)),
        ("conv5_3", (14, 14)),
    ];
    let got: Vec<(String, (usize, usize))> = layout
        .layers
        .iter()
        .filter(|l| l.is_conv)
        .map(|l| (l.id.clone(), l.tile))
        .collect();
    assert_eq!(got.len(), expected.len());
    for ((id, tile), (want_id, want_tile)) in got.iter().zip(expected.iter()) {
        assert_eq!((id.as_str(), *tile), (*want_id, *want_tile));
    }
    println!("criterion 8 (planner feasibility and per-layer tile table): PASS");
}

#[test]
fn criterion_09_fused_simulator_soundness_campaign() {
    let start = Instant::now();
    let budget = HardwareBudget { bram_bits: 1 << 26, n_pe: 4, activation_bits: 8, weight_buffer_bits: 1 << 22 };
    let mut residual_cases = 0;
    let mut depthwise_cases = 0;
    let mut trials = 0;
    for seed in 0..100u64 {
        let net = random_small_net(seed);
        if net.layers.iter().any(|l| matches!(l.kind, blockconv::LayerKind::EltwiseAdd { .. })) {
            residual_cases += 1;
        }
        if net
            .layers
            .iter()
            .any(|l| matches!(l.kind, blockconv::LayerKind::Conv { depthwise: true, .. }))
        {
            depthwise_cases += 1;
        }
        let weights = NetWeights::seeded(&net, seed ^ 0xABCD).unwrap();
        let input = Tensor4D::seeded_random(
            Dims::new(1, net.input_shape.c, net.input_shape.h, net.input_shape.w),
            net.activation_format,
            seed ^ 0x1234,
        );

        // grouping and tile derived from the seed
        let units = fusion_units(&net);
        let mut groups = Vec::new();
        let mut run = 0;
        for u in 0..units.len() {
            run += 1;
            if seed >> (u % 8) & 1 == 1 || u == units.len() - 1 {
                groups.push(run);
                run = 0;
            }
        }
        let tile = net.input_shape.h / if seed % 2 == 0 { 2 } else { 4 };
        let style = if seed % 2 == 0 { BlockingStyle::Fixed } else { BlockingStyle::Hierarchical };
        let spec: Vec<(usize, (usize, usize))> = groups.iter().map(|&n| (n, (tile, tile))).collect();
        let mut plan = FusionPlan::from_unit_counts(&net, style, &spec).unwrap();
        // fall back to full fusion when the drawn grouping's block shapes
        // cannot evolve consistently, so every seed exercises the simulator
        let (score, _) = match plan_score(&net, &plan, &budget, false) {
            Ok(s) => s,
            Err(_) => {
                plan = FusionPlan::single_group(&net, (tile, tile), style);
                plan_score(&net, &plan, &budget, false).unwrap()
            }
        };
        assert!(score.onchip_bits <= budget.bram_bits, "seed {seed} should fit the generous budget");

        let blocking = fusion_blocking_plan(&net, &plan).unwrap();
        let sim = simulate_fused(&net, &weights, &input, &plan, &blocking, &budget, FusedOptions::default())
            .unwrap_or_else(|e| panic!("seed {seed}: feasible plan must simulate, got {e}"));
        let reference = blocked_forward(&net, &weights, &input, &blocking).unwrap();
        assert_eq!(
            verify_equivalence(&sim.output, &reference).unwrap(),
            VerifyResult::Pass,
            "seed {seed}"
        );
        trials += 1;
    }
    assert!(trials >= 100, "only {trials} of 100 seeds simulated");
    assert!(residual_cases > 0 && depthwise_cases > 0);
    assert!(start.elapsed().as_secs() < 120, "campaign took {:?}", start.elapsed());
    println!("criterion 9 (fused simulator soundness, {trials} seeds): PASS");
}

#[test]
fn criterion_10_padding_modes_match_the_mirror_clamp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for trial in 0..50u64 {
        let h = rng.random_range(2..=10);
        let w = rng.random_range(2..=10);
        let c = rng.random_range(1..=3);
        let input = Tensor4D::seeded_random(Dims::new(1, c, h, w), f8(), 110_000 + trial);
        let raw = RawTensor::from_tensor(&input);
        for mode in [PadMode::Replicate, PadMode::Reflect] {
            let mut amount = |extent: usize| {
                if mode == PadMode::Reflect {
                    rng.random_range(0..extent.min(4))
                } else {
                    rng.random_range(0..4)
                }
            };
            let pads = (amount(h), amount(h), amount(w), amount(w));
            let spec = PadSpec::new(pads.0, pads.1, pads.2, pads.3);
            let got = blockconv::pad(&input, spec, mode).unwrap();
            let want = naive_pad(&raw, pads, mode);
            assert_eq!(got.fixed_data().unwrap(), want.data.as_slice(), "trial {trial} {mode:?}");
        }
    }
    println!("criterion 10 (replicate/reflect padding vs index oracle, 50 seeds): PASS");
}
