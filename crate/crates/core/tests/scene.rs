use std::path::{Path, PathBuf};

use nalgebra::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomgen::Aabb;
use roomgen::scene::{compute_free_space, load_scene, save_scene, validate_scene, Scene};

fn toy_room_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/scenes/toy_room/scene.toml")
}

fn toy_room() -> Scene {
    load_scene(&toy_room_path()).unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn sample_in(rng: &mut ChaCha8Rng, h: &Aabb) -> Point3<f64> {
    Point3::new(
        rng.random_range(h.min.x..h.max.x),
        rng.random_range(h.min.y..h.max.y),
        rng.random_range(h.min.z..h.max.z),
    )
}

#[test]
fn toy_room_has_twelve_unique_instances() {
    let scene = toy_room();
    assert_eq!(scene.objects.len(), 12);
    let ids: Vec<u32> = scene.objects.iter().map(|o| o.instance_id).collect();
    assert_eq!(ids, (1..=12).collect::<Vec<_>>());
    assert!(validate_scene(&scene).is_empty());
    assert!(scene.objects.iter().filter(|o| o.physical.movable).count() >= 3);
}

#[test]
fn multi_part_meshes_carry_part_labels() {
    let scene = toy_room();
    let table = scene.objects.iter().find(|o| o.name == "table").unwrap();
    let parts = table.mesh.part_labels.as_ref().unwrap();
    assert_eq!(parts.iter().max(), Some(&5));
}

#[test]
fn load_save_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(toy_room_path().parent().unwrap(), dir.path());
    let first = toy_room();
    let saved = dir.path().join("roundtrip.toml");
    save_scene(&first, &saved).unwrap();
    let second = load_scene(&saved).unwrap();
    assert_eq!(first, second);
}

#[test]
fn save_into_empty_directory_writes_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let first = toy_room();
    let saved = dir.path().join("scene.toml");
    save_scene(&first, &saved).unwrap();
    assert!(dir.path().join("meshes/table.obj").exists());
    let second = load_scene(&saved).unwrap();
    assert_eq!(first.objects.len(), second.objects.len());
    for (a, b) in first.objects.iter().zip(&second.objects) {
        assert_eq!(a.mesh.triangles.len(), b.mesh.triangles.len());
        assert_eq!(a.world_hull(), b.world_hull());
    }
}

#[test]
fn wall_points_are_occupied() {
    let scene = toy_room();
    let free = compute_free_space(&scene, 0.1).unwrap();
    assert!(free.is_occupied(&Point3::new(0.02, 2.0, 1.5)));
    assert!(free.is_free(&Point3::new(2.0, 1.0, 1.5)));
}

#[test]
fn thousand_points_inside_hulls_are_occupied() {
    let scene = toy_room();
    let free = compute_free_space(&scene, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let o = &scene.objects[rng.random_range(0..scene.objects.len())];
        let h = o.world_hull();
        let p = sample_in(&mut rng, &h);
        assert!(free.is_occupied(&p), "{} at {p:?}", o.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refining_never_frees_coarse_occupancy(cell in 0.1f64..0.4) {
        let scene = toy_room();
        let coarse = compute_free_space(&scene, cell).unwrap();
        let fine = compute_free_space(&scene, cell / 2.0).unwrap();
        // Any fine cell occupied by an object lies in an occupied coarse cell.
        for k in 0..fine.dims[2] {
            for j in 0..fine.dims[1] {
                for i in 0..fine.dims[0] {
                    if fine.cell_occupied([i, j, k]) {
                        let c = fine.cell_center([i, j, k]);
                        prop_assert!(coarse.is_occupied(&c));
                    }
                }
            }
        }
    }

    #[test]
    fn hull_samples_hit_occupied_cells(seed in any::<u64>(), cell in 0.05f64..0.5) {
        let scene = toy_room();
        let free = compute_free_space(&scene, cell).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for o in &scene.objects {
            let h = o.world_hull();
            let p = sample_in(&mut rng, &h);
            prop_assert!(free.is_occupied(&p));
        }
    }
}
