import { mkdirSync, writeFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it, vi } from 'vitest';

import { captureSnapshot, captureSnapshotText, ElementView, mapFontWeight, mapVisibility } from '../src/capture.js';
import { snapshotSchema } from '../src/types.js';

interface FakeSpec {
  tag: string;
  attrs?: Record<string, string>;
  rect?: { x: number; y: number; w: number; h: number };
  style?: Partial<{ fontSize: string; fontWeight: string; visibility: string; cursor: string }>;
  children?: FakeSpec[];
}

function fake(spec: FakeSpec): ElementView {
  const style = {
    fontSize: '16px',
    fontWeight: '400',
    visibility: 'visible',
    cursor: 'auto',
    ...spec.style,
  };
  return {
    tagName: spec.tag,
    children: (spec.children ?? []).map(fake),
    getAttribute: (name) => spec.attrs?.[name] ?? null,
    rect: () => spec.rect ?? { x: 0, y: 0, w: 10, h: 10 },
    style: () => style,
  };
}

/** Seven elements, the five hand-annotation labels on distinct nodes. */
function productPage(): ElementView {
  return fake({
    tag: 'BODY',
    rect: { x: 0, y: 0, w: 1280, h: 2000 },
    children: [
      {
        tag: 'DIV',
        rect: { x: 20, y: 40, w: 600, h: 800 },
        children: [
          {
            tag: 'H1',
            attrs: { 'data-tree-label': 'name' },
            style: { fontSize: '32px', fontWeight: 'bold' },
            rect: { x: 24, y: 48, w: 400, h: 40 },
          },
          {
            tag: 'SPAN',
            attrs: { 'data-tree-label': 'price' },
            rect: { x: 24, y: 100, w: 80, h: 24 },
          },
          {
            tag: 'IMG',
            attrs: { 'data-tree-label': 'mainpicture', src: 'product.jpg' },
            rect: { x: 24, y: 140, w: 480, h: 480 },
          },
        ],
      },
      {
        tag: 'BUTTON',
        attrs: { 'data-tree-label': 'addtocart' },
        style: { cursor: 'pointer', fontWeight: '600' },
        rect: { x: 650, y: 400, w: 160, h: 48 },
      },
      {
        tag: 'A',
        attrs: { 'data-tree-label': 'cart', href: '/cart' },
        rect: { x: 1180, y: 10, w: 60, h: 30 },
      },
    ],
  });
}

describe('captureSnapshot on the fixture page', () => {
  const options = { region: 'US', url: 'http://shop.test/product' };

  it('emits 7 nodes with exactly 5 labels and passes the schema', () => {
    const snapshot = captureSnapshot(productPage(), options);
    expect(snapshot.nodes).toHaveLength(7);
    const labels = snapshot.nodes.filter((n) => n.label).map((n) => n.label);
    expect(labels.sort()).toEqual(['addtocart', 'cart', 'mainpicture', 'name', 'price']);
    expect(() => snapshotSchema.parse(snapshot)).not.toThrow();
  });

  it('keeps structural invariants: pre-order parents, visibility set, counts', () => {
    const snapshot = captureSnapshot(productPage(), options);
    snapshot.nodes.forEach((node, i) => {
      expect(node.id).toBe(i);
      if (i === 0) expect(node.parent).toBe(-1);
      else expect(node.parent).toBeLessThan(node.id);
      expect(node.num_bitmap_images).toBeGreaterThanOrEqual(0);
      expect(node.num_vector_images).toBeGreaterThanOrEqual(0);
    });
  });

  it('is idempotent: two captures are field-identical', () => {
    const page = productPage();
    expect(captureSnapshotText(page, options)).toBe(captureSnapshotText(page, options));
  });

  it('preserves root geometry exactly and maps weights', () => {
    const snapshot = captureSnapshot(productPage(), options);
    expect(snapshot.nodes[0].bbox).toEqual({ x: 0, y: 0, w: 1280, h: 2000 });
    const name = snapshot.nodes.find((n) => n.label === 'name')!;
    expect(name.font_weight).toBe(700); // computed "bold"
    expect(name.font_size).toBe(32);
  });

  it('counts bitmap images inclusively and marks interactables active', () => {
    const snapshot = captureSnapshot(productPage(), options);
    const picture = snapshot.nodes.find((n) => n.label === 'mainpicture')!;
    expect(picture.num_bitmap_images).toBe(1);
    expect(snapshot.nodes[0].num_bitmap_images).toBe(1); // body contains it
    const button = snapshot.nodes.find((n) => n.label === 'addtocart')!;
    const cart = snapshot.nodes.find((n) => n.label === 'cart')!;
    expect(button.is_active).toBe(true);
    expect(cart.is_active).toBe(true);
    expect(snapshot.nodes[0].is_active).toBe(false);
  });

  it('writes the fixture output consumed by the ingestion round-trip check', () => {
    const here = dirname(fileURLToPath(import.meta.url));
    const out = join(here, '..', 'fixtures');
    mkdirSync(out, { recursive: true });
    writeFileSync(join(out, 'captured-snapshot.json'), captureSnapshotText(productPage(), options));
  });
});

describe('attribute mapping', () => {
  it('maps textual font weights and clamps the range', () => {
    expect(mapFontWeight('normal')).toBe(400);
    expect(mapFontWeight('bold')).toBe(700);
    expect(mapFontWeight('650')).toBe(650);
    expect(mapFontWeight('50')).toBe(100);
  });

  it('falls back to 400 on unparsable weights with a warning', () => {
    const warn = vi.spyOn(console, 'warn').mockImplementation(() => {});
    expect(mapFontWeight('wiggly')).toBe(400);
    expect(warn).toHaveBeenCalled();
    warn.mockRestore();
  });

  it('maps unknown visibility to visible with a warning', () => {
    const warn = vi.spyOn(console, 'warn').mockImplementation(() => {});
    expect(mapVisibility('blurry')).toBe('visible');
    expect(warn).toHaveBeenCalled();
    expect(mapVisibility('COLLAPSE')).toBe('collapse');
    warn.mockRestore();
  });
});

describe('capture options', () => {
  it('counts inline vector graphics', () => {
    const page = fake({
      tag: 'DIV',
      children: [{ tag: 'svg' }, { tag: 'IMG', attrs: { src: 'icon.svg' } }],
    });
    const snapshot = captureSnapshot(page);
    expect(snapshot.nodes[0].num_vector_images).toBe(2);
  });

  it('honors a custom label attribute', () => {
    const page = fake({ tag: 'DIV', attrs: { 'x-cls': 'price' } });
    const snapshot = captureSnapshot(page, { labelAttribute: 'x-cls' });
    expect(snapshot.nodes[0].label).toBe('price');
  });

  it('rejects an empty label attribute name', () => {
    expect(() => captureSnapshot(fake({ tag: 'DIV' }), { labelAttribute: '' })).toThrow();
  });

  it('skips hidden subtrees when includeInvisible is false', () => {
    const page = fake({
      tag: 'DIV',
      children: [
        { tag: 'P', style: { visibility: 'hidden' }, children: [{ tag: 'SPAN' }] },
        { tag: 'P' },
      ],
    });
    expect(captureSnapshot(page).nodes).toHaveLength(4);
    const trimmed = captureSnapshot(page, { includeInvisible: false });
    expect(trimmed.nodes).toHaveLength(2);
    expect(trimmed.nodes.map((n) => n.tag)).toEqual(['div', 'p']);
  });
});
