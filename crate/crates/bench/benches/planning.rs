use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use blockconv::graph::preset;
use blockconv::planner::{
    explore, fusion_blocking_plan, BlockingStyle, ExploreConfig, FusionPlan, HardwareBudget,
};
use blockconv::sim::{simulate_baseline_shapes, simulate_fused_shapes, BaselineOptions, FusedOptions, Tiling};
use blockconv_bench::conv_chain;

fn bench_explore(c: &mut Criterion) {
    let budget = HardwareBudget::zc706(4, 8, 8 << 20);
    let net = conv_chain(8, 16, 64);
    let tiles = [(16, 16), (32, 16), (32, 32)];
    c.bench_function("explore 8-layer chain, 3 tiles", |b| {
        b.iter(|| explore(black_box(&net), &budget, &tiles, &ExploreConfig::default()).unwrap())
    });

    let vgg = {
        let mut n = preset("vgg16-conv").unwrap();
        n.activation_format = blockconv::ScalarFormat::fixed(8, 4).unwrap();
        n.weight_format = blockconv::ScalarFormat::fixed(8, 4).unwrap();
        n
    };
    c.bench_function("explore vgg16 body, 3 tiles", |b| {
        b.iter(|| explore(black_box(&vgg), &budget, &[(14, 14), (28, 14), (28, 28)], &ExploreConfig::default()).unwrap())
    });
}

fn bench_traffic(c: &mut Criterion) {
    let vdsr = preset("vdsr").unwrap();
    let budget = HardwareBudget { bram_bits: 20_090_880, n_pe: 8, activation_bits: 8, weight_buffer_bits: 4 << 20 };
    let plan = FusionPlan::single_group(&vdsr, (27, 48), BlockingStyle::Fixed);
    let blocking = fusion_blocking_plan(&vdsr, &plan).unwrap();
    c.bench_function("fused traffic, full-resolution shapes", |b| {
        b.iter(|| simulate_fused_shapes(black_box(&vdsr), &plan, &blocking, &budget, FusedOptions::default()).unwrap())
    });

    let opts = BaselineOptions {
        fuse_head: true,
        host_residual_output: true,
        ..BaselineOptions::new(Tiling { t_r: 27, t_c: 48, t_m: 64, t_n: 64 })
    };
    c.bench_function("baseline traffic, full-resolution shapes", |b| {
        b.iter(|| simulate_baseline_shapes(black_box(&vdsr), &opts).unwrap())
    });
}

criterion_group!(benches, bench_explore, bench_traffic);
criterion_main!(benches);
