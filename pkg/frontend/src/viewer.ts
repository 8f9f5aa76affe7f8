// three.js scene wrapper: orbit camera, solid + wireframe rendering of
// server-provided OBJ meshes. Browser-only module (not exercised in tests).

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

import { parseObj, type ParsedMesh } from "./obj";

export class MeshViewer {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private unionMesh: THREE.Mesh | null = null;
  private partMesh: THREE.Mesh | null = null;
  wireframe = false;

  constructor(private canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 20);
    this.camera.position.set(1.2, 0.9, 1.4);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.target.set(0, 0, 0);
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(2, 3, 2);
    this.scene.add(key);
    const rim = new THREE.DirectionalLight(0x8899ff, 0.4);
    rim.position.set(-2, 1, -2);
    this.scene.add(rim);
    this.scene.add(new THREE.GridHelper(1.2, 12, 0x334, 0x223));
    const animate = () => {
      requestAnimationFrame(animate);
      this.resize();
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  private resize(): void {
    const w = this.canvas.clientWidth;
    const h = this.canvas.clientHeight;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.renderer.setSize(w, h, false);
      this.camera.aspect = w / Math.max(h, 1);
      this.camera.updateProjectionMatrix();
    }
  }

  private toGeometry(parsed: ParsedMesh): THREE.BufferGeometry {
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(parsed.positions, 3));
    geo.setIndex(new THREE.BufferAttribute(parsed.indices, 1));
    geo.computeVertexNormals();
    return geo;
  }

  private swap(old: THREE.Mesh | null, objText: string | null, color: number, opacity = 1.0): THREE.Mesh | null {
    if (old) {
      this.scene.remove(old);
      old.geometry.dispose();
      (old.material as THREE.Material).dispose();
    }
    if (!objText) return null;
    const parsed = parseObj(objText);
    if (!parsed.indices.length) return null;
    const material = new THREE.MeshStandardMaterial({
      color,
      wireframe: this.wireframe,
      transparent: opacity < 1,
      opacity,
      side: THREE.DoubleSide,
      flatShading: true,
    });
    const mesh = new THREE.Mesh(this.toGeometry(parsed), material);
    this.scene.add(mesh);
    return mesh;
  }

  showUnion(objText: string): void {
    this.unionMesh = this.swap(this.unionMesh, objText, 0x9fb8d8, this.partMesh ? 0.35 : 1.0);
  }

  showPart(objText: string | null): void {
    this.partMesh = this.swap(this.partMesh, objText, 0xffb24d);
    if (this.unionMesh) {
      const mat = this.unionMesh.material as THREE.MeshStandardMaterial;
      mat.transparent = !!this.partMesh;
      mat.opacity = this.partMesh ? 0.35 : 1.0;
      mat.needsUpdate = true;
    }
  }

  setWireframe(on: boolean): void {
    this.wireframe = on;
    for (const mesh of [this.unionMesh, this.partMesh]) {
      if (mesh) {
        (mesh.material as THREE.MeshStandardMaterial).wireframe = on;
      }
    }
  }
}
