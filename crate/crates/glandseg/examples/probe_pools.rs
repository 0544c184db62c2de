// temporary: measure eligible patch-center pools on the synthetic data

use glandseg::dataset::{generate_synthetic_dataset, SynthParams};
use glandseg::imaging::downsample_half;

fn main() {
    for (label, frac) in [("0.5", 0.5), ("0.75", 0.75)] {
        let params = SynthParams {
            images: 24,
            benign: 12,
            touching_fraction: frac,
            ..SynthParams::default()
        };
        let set = generate_synthetic_dataset(4242, &params);
        let margin = 16usize;
        let mut per_image = Vec::new();
        let mut gland_px = Vec::new();
        for s in &set {
            let sep_half = {
                let inst = glandseg::dataset::InstanceLabelImage::new(
                    s.separator.width(),
                    s.separator.height(),
                    s.separator.data().iter().map(|&v| (v > 0.0) as u32).collect(),
                )
                .unwrap();
                inst.downsample_half_nearest().unwrap()
            };
            let (w, h) = (sep_half.width(), sep_half.height());
            let mut count = 0;
            for v in margin..h.saturating_sub(margin) {
                for u in margin..w.saturating_sub(margin) {
                    if sep_half.label(u, v) > 0 {
                        count += 1;
                    }
                }
            }
            per_image.push((count, s.touching, s.malignant));

            let labels_half = s.labels.downsample_half_nearest().unwrap();
            let mut g = 0;
            for v in margin..labels_half.height().saturating_sub(margin) {
                for u in margin..labels_half.width().saturating_sub(margin) {
                    if labels_half.label(u, v) > 0 {
                        g += 1;
                    }
                }
            }
            gland_px.push(g);
            let half = downsample_half(&s.rgb).unwrap();
            let _ = half;
        }
        let total: usize = per_image.iter().map(|x| x.0).sum();
        let touching_images = per_image.iter().filter(|x| x.1).count();
        println!(
            "touching_fraction {label}: {touching_images}/24 touching images, total eligible sep-positive centers {total}"
        );
        println!("  per-image: {:?}", per_image.iter().map(|x| x.0).collect::<Vec<_>>());
        println!(
            "  gland-class centers per image: min {} max {}",
            gland_px.iter().min().unwrap(),
            gland_px.iter().max().unwrap()
        );
    }
}
