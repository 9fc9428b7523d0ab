//! Generates a pair of synthetic frame bundles (current + nearby view of a
//! three-plane scene) plus a normals file, for exercising the CLI:
//!
//! ```text
//! cargo run --example make_demo -- /tmp/demo
//! ```

use planar::benchmark::FrameAnnotation;
use planar::geometry::{CameraIntrinsics, DepthMap, Mat3, PixelCoord, Pose, Vec3};
use planar::io;
use planar::plane::{plane_depth, InstanceMask, Plane};

fn main() -> planar::Result<()> {
    let root = std::path::PathBuf::from(
        std::env::args().nth(1).unwrap_or_else(|| "demo".into()),
    );
    let k = CameraIntrinsics::new(60.0, 60.0, 29.5, 22.0, 60, 45)?;
    let planes = vec![
        Plane::new(Vec3::new(0.0, 0.0, 1.0), 2.0)?,
        Plane::new(Vec3::new(0.3, 0.0, 1.0), 2.5)?,
        Plane::new(Vec3::new(0.0, -0.3, 1.0), 3.0)?,
    ];

    // The nearby view is offset by 0.05 m on purpose so the cross-view
    // warping loss is nonzero and its gradient is well defined (the loss is
    // not differentiable where the two views agree exactly).
    for (name, shift, bias) in [("current", 0.0, 0.0), ("nearby", 0.1, 0.05)] {
        // the nearby camera sits `shift` meters to the right, so the same
        // world planes appear with offsets measured from the moved origin
        let mut view_planes = Vec::new();
        for p in &planes {
            let d = p.offset() - p.normal().x * shift + bias;
            view_planes.push(Plane::new(p.normal(), d)?);
        }
        let mut depth = DepthMap::invalid(60, 45);
        let mut masks = vec![
            InstanceMask::empty(60, 45),
            InstanceMask::empty(60, 45),
            InstanceMask::empty(60, 45),
        ];
        for row in 0..45 {
            for col in 0..60 {
                let band = col * 3 / 60;
                if let Some(z) = plane_depth(
                    &view_planes[band],
                    PixelCoord::new(col as f64, row as f64),
                    &k,
                ) {
                    depth.set(col, row, z);
                    masks[band].set(col, row, true);
                }
            }
        }
        let pose = Pose::new(Mat3::identity(), Vec3::new(shift, 0.0, 0.0))?;
        let annotation = FrameAnnotation {
            is_layout: vec![false; view_planes.len()],
            planes: view_planes,
            visible_masks: masks,
            complete_masks: None,
            gt_depth: depth.clone(),
            pose,
            intrinsics: k,
        };
        let dir = root.join(name);
        io::write_annotation(&annotation, &dir)?;
        // sensor depth with a mild bias, for the pose filter
        let mut sensor = depth.clone();
        for v in 0..45 {
            for u in 0..60 {
                let z = depth.get(u, v);
                if z > 0.0 {
                    sensor.set(u, v, z + 0.02);
                }
            }
        }
        io::write_depth_raw(&sensor, &dir.join("sensor_depth.pgdm"))?;
        println!("wrote {}", dir.display());
    }

    // normals for anchor clustering: the three plane normals, repeated
    let mut lines = String::new();
    for _ in 0..40 {
        for p in &planes {
            let n = p.normal();
            lines.push_str(&format!("{} {} {}\n", n.x, n.y, n.z));
        }
    }
    std::fs::write(root.join("normals.txt"), lines)?;
    println!("wrote {}", root.join("normals.txt").display());
    Ok(())
}
