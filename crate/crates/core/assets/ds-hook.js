(function () {
  "use strict";
  var cfgEl = document.getElementById("ds-hook-config");
  var cfg = { post_path: "/__ds/post", max_capture_multiplier: 2, connection_gate: "wifi-only" };
  try {
    if (cfgEl) {
      var parsed = JSON.parse(cfgEl.textContent);
      for (var k in parsed) cfg[k] = parsed[k];
    }
  } catch (e) {}

  function onWifi() {
    if (cfg.connection_gate === "always") return true;
    var c = navigator.connection || navigator.mozConnection || navigator.webkitConnection;
    return !!c && c.type === "wifi";
  }

  function mineLinks(maxH) {
    var out = [];
    var anchors = document.querySelectorAll("a[href]");
    for (var i = 0; i < anchors.length; i++) {
      var r = anchors[i].getBoundingClientRect();
      var top = r.top + window.scrollY, left = r.left + window.scrollX;
      if (r.width <= 0 || r.height <= 0 || top >= maxH) continue;
      out.push({ url: anchors[i].href, left: left, top: top, right: left + r.width, bottom: top + r.height });
    }
    return out;
  }

  function post() {
    if (!onWifi() || typeof window.html2canvas !== "function") return;
    var vw = window.innerWidth, vh = window.innerHeight;
    var h = Math.min(document.documentElement.scrollHeight, vh * cfg.max_capture_multiplier);
    window.html2canvas(document.body, { height: h, windowHeight: h }).then(function (canvas) {
      canvas.toBlob(function (blob) {
        if (!blob) return;
        var fd = new FormData();
        fd.append("image", blob, "snapshot.png");
        fd.append("url", location.href);
        fd.append("links", JSON.stringify(mineLinks(h)));
        fd.append("viewport_height", String(vh));
        fd.append("ff_width", String(screen.width));
        fd.append("ff_height", String(screen.height));
        var x = new XMLHttpRequest();
        x.open("POST", cfg.post_path, true);
        x.send(fd);
      }, "image/png");
    })["catch"](function () {});
  }

  function schedule() {
    setTimeout(function () {
      try { post(); } catch (e) {}
    }, 1000);
  }

  if (document.readyState === "complete") schedule();
  else window.addEventListener("load", schedule);
})();
