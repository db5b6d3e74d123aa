use explore_wasm_demo::Scene;

#[test]
fn scene_round_trip() {
    let s = Scene::generate("perimeter_blocks", 3, 20, 48, 20.0).unwrap();
    let side = s.side();
    assert_eq!(s.cells().len(), side * side);
    assert_eq!(s.nodes().len(), 40);

    let scan = s.scan(32.5, 32.5).unwrap();
    assert_eq!(scan.len(), side * side);
    assert!(scan.iter().all(|&c| c <= 2));
    // every occupied code in a single scan sits on a real obstacle
    let cells = s.cells();
    assert!(scan.iter().zip(&cells).all(|(&e, &c)| e != 2 || c == 1));

    let ep = s.episode("rear_side_voxel", 200.0, 6, 1).unwrap();
    let again = s.episode("rear_side_voxel", 200.0, 6, 1).unwrap();
    assert_eq!(ep.path(), again.path());
    assert!(ep.path().len() <= 7);
    assert!(ep.cumulative().windows(2).all(|w| w[1] >= w[0]));
    assert!(ep.evidence().iter().filter(|&&c| c != 0).count() >= scan.iter().filter(|&&c| c != 0).count() / 4);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(Scene::generate("mountains", 1, 10, 16, 5.0).is_err());
    let s = Scene::generate("random_disks", 1, 10, 16, 5.0).unwrap();
    assert!(s.episode("learned", 50.0, 3, 0).is_err());
    assert!(s.episode("nope", 50.0, 3, 0).is_err());
    assert!(s.scan(-4.0, 2.0).is_err());
}
